#include "taper/tape.hpp"

namespace taper {

NodeId Tape::input(Tensor value) {
  nodes_.push_back(Node{"input", {}, std::move(value), Tensor(), nullptr, nullptr});
  return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Tape::param(Parameter* p) {
  if (!p) fail("Tape::param: null parameter");
  nodes_.push_back(Node{"param", {}, p->value, Tensor(), nullptr, p});
  return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Tape::apply(const char* op, std::vector<NodeId> inputs, Tensor value, BackwardFn backward) {
  NodeId next = static_cast<NodeId>(nodes_.size());
  for (NodeId in : inputs)
    if (in < 0 || in >= next) fail("%s: input node %d not on tape", op, in);
  nodes_.push_back(Node{op, std::move(inputs), std::move(value), Tensor(), std::move(backward),
                        nullptr});
  return next;
}

Tensor& Tape::grad_buf(NodeId id) {
  Node& n = node(id);
  if (n.grad.numel() == 0) n.grad = Tensor::zeros(n.value.shape());
  return n.grad;
}

void Tape::backward(NodeId loss) {
  if (nodes_.empty()) fail("backward called on an empty tape (no forward recorded)");
  Node& ln = node(loss);
  if (ln.value.numel() != 1)
    fail("backward requires a scalar loss, got shape %s", shape_str(ln.value.shape()).c_str());

  // Mark the subgraph feeding the loss.
  std::vector<char> reach(nodes_.size(), 0);
  std::vector<NodeId> stack{loss};
  reach[static_cast<size_t>(loss)] = 1;
  while (!stack.empty()) {
    NodeId id = stack.back();
    stack.pop_back();
    for (NodeId in : nodes_[static_cast<size_t>(id)].inputs) {
      if (!reach[static_cast<size_t>(in)]) {
        reach[static_cast<size_t>(in)] = 1;
        stack.push_back(in);
      }
    }
  }

  grad_buf(loss)[0] = real(1);

  // Reverse creation order is a reverse topological order.
  for (NodeId id = loss; id >= 0; --id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!reach[static_cast<size_t>(id)] || n.grad.numel() == 0) continue;
    if (n.backward) n.backward(*this, n.grad);
    if (n.bound) {
      auto dst = n.bound->grad.span();
      auto src = n.grad.span();
      for (size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
    }
  }
  ran_backward_ = true;
}

void Tape::clear() {
  nodes_.clear();
  ran_backward_ = false;
}

}  // namespace taper
