// Reverse-mode autodiff tape.
//
// One tape records one minibatch forward pass; backward() walks the recorded
// nodes once in reverse creation order (creation order is topological since an
// op can only consume already-recorded nodes). First-order gradients only.
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "taper/tensor.hpp"

namespace taper {

// A named, trainable tensor that outlives the tape. Gradients accumulate here
// after backward(). Pruning parameters rho are NOT Parameters; they are owned
// by the pruning sites and updated by their own solver.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)) {
    grad = Tensor::zeros(value.shape());
  }
  void zero_grad() {
    for (auto& g : grad.span()) g = real(0);
  }
};

using NodeId = int32_t;

class Tape {
 public:
  // Backward fn receives the upstream gradient of the node's output and
  // accumulates into the input nodes' gradient buffers via grad_buf().
  using BackwardFn = std::function<void(Tape&, const Tensor& upstream)>;

  // Constant leaf (network input, labels carrier, ...). No gradient flows out.
  NodeId input(Tensor value);

  // Leaf bound to an external Parameter; backward() adds into param->grad.
  NodeId param(Parameter* p);

  // Record an op node.
  NodeId apply(const char* op, std::vector<NodeId> inputs, Tensor value, BackwardFn backward);

  // Reverse pass from a scalar loss node. Visits each reachable node once.
  void backward(NodeId loss);

  const Tensor& value(NodeId id) const { return node(id).value; }
  const std::vector<NodeId>& inputs_of(NodeId id) const { return node(id).inputs; }

  // Gradient of a node; empty tensor if no gradient reached it.
  const Tensor& grad(NodeId id) const { return node(id).grad; }

  // Gradient buffer for accumulation, allocated (zeros) on first use.
  Tensor& grad_buf(NodeId id);

  void clear();
  size_t size() const { return nodes_.size(); }
  bool ran_backward() const { return ran_backward_; }

 private:
  struct Node {
    const char* op;
    std::vector<NodeId> inputs;
    Tensor value;
    Tensor grad;
    BackwardFn backward;
    Parameter* bound = nullptr;
  };

  Node& node(NodeId id) {
    if (id < 0 || static_cast<size_t>(id) >= nodes_.size()) fail("invalid tape node id %d", id);
    return nodes_[static_cast<size_t>(id)];
  }
  const Node& node(NodeId id) const { return const_cast<Tape*>(this)->node(id); }

  std::vector<Node> nodes_;
  bool ran_backward_ = false;
};

}  // namespace taper
