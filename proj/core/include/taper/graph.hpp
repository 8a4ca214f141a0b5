// Network description and the instrumented (gated) execution graph.
//
// A GraphSpec is an ordered list of layer descriptors plus site declarations
// naming which tensors get a pruning gate on their channel dim. build():
//  - validates the DAG (layers may only consume already-declared tensors),
//  - splits grouped convolutions into slices + ungrouped convs + a concat,
//  - wires a gate after every declared site tensor,
//  - computes static shapes and the channel attribution maps used by the
//    resource model and by extraction.
#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "taper/gate.hpp"
#include "taper/ops.hpp"
#include "taper/site.hpp"
#include "taper/tape.hpp"

namespace taper {

enum class LayerKind { conv2d, relu, maxpool2d, dense, flatten, concat, slice };

struct LayerDesc {
  LayerKind kind = LayerKind::relu;
  std::string name;
  std::vector<std::string> inputs;  // tensor names ("input" is the network input)
  int channels = 0;                 // conv out channels
  int kernel = 0;                   // conv / pool
  int stride = 1;
  int pad = 0;        // conv only
  int groups = 1;     // conv; >1 is split at build time
  int features = 0;   // dense out features
  int64_t begin = 0;  // slice channel range
  int64_t end = 0;
};

struct SiteDecl {
  std::string name;
  std::string tensor;
};

struct GraphSpec {
  int version = 1;
  std::string name;
  Shape input_shape;  // static, no batch: [C,H,W] or [F]
  std::vector<LayerDesc> layers;
  std::vector<SiteDecl> sites;
  uint64_t init_seed = 1;
  std::string init_weights;  // optional tensor-container path

  static GraphSpec from_json(const std::string& text);
  static GraphSpec load(const std::string& path);
  std::string to_json() const;
  void save(const std::string& path) const;
};

// Which pruning site (if any) owns a channel/feature position of a tensor.
struct ChanRef {
  int site = -1;  // -1: not attributed to a site
  int32_t idx = 0;
  bool operator==(const ChanRef&) const = default;
};
using ChanMap = std::vector<ChanRef>;

class InstrumentedGraph {
 public:
  struct TensorInfo {
    std::string name;
    Shape shape;     // static, no batch dim
    ChanMap prov;    // gates between the last conv/dense and this tensor
    ChanMap ctrl;    // gate that governs removal of these channels downstream
    int producer = -1;              // layer index, -1 for the network input
    std::vector<int> consumers;     // layer indices
    int site = -1;                  // site gating this tensor, if any
    int64_t channels() const { return shape.empty() ? 0 : shape[0]; }
  };

  struct Layer {
    LayerDesc desc;
    Shape out_shape;  // static
    int w_param = -1, b_param = -1;
  };

  static InstrumentedGraph build(const GraphSpec& spec);
  static InstrumentedGraph build(const GraphSpec& spec,
                                 const std::map<std::string, Tensor>& weights);

  // Training-mode forward: records ops and stochastic gates on the tape and
  // returns the logits node. After tape.backward(loss), l0p(site) holds the
  // per-channel surrogate gradient -sum_n dL0/dx for this iteration.
  NodeId forward_train(Tape& t, const Tensor& x, const GateConfig& cfg, uint64_t run_seed,
                       int64_t iteration);
  const std::vector<real>& l0p(size_t site_index) const { return l0p_[site_index]; }

  // Deterministic validation forward: gates multiply by [rho > 0].
  Tensor forward_eval(const Tensor& x) const;
  // Forward with all gates forced open (the uninstrumented network).
  Tensor forward_plain(const Tensor& x) const;

  std::vector<Parameter*> parameters();
  Parameter* parameter(const std::string& name);
  const Parameter* parameter(const std::string& name) const {
    return const_cast<InstrumentedGraph*>(this)->parameter(name);
  }
  std::vector<PruningSiteState>& sites() { return sites_; }
  const std::vector<PruningSiteState>& sites() const { return sites_; }

  const GraphSpec& spec() const { return spec_; }  // post-split form
  const std::vector<Layer>& layers() const { return layers_; }
  const TensorInfo& tensor(const std::string& name) const;
  const std::vector<std::string>& tensor_names() const { return tensor_order_; }
  int64_t num_classes() const;

 private:
  Tensor forward_values(const Tensor& x, bool masked) const;

  GraphSpec spec_;
  std::vector<Layer> layers_;
  std::vector<std::unique_ptr<Parameter>> params_;
  std::vector<PruningSiteState> sites_;
  std::vector<std::vector<real>> l0p_;
  std::map<std::string, TensorInfo> tensors_;
  std::vector<std::string> tensor_order_;
  std::string output_tensor_;

  friend struct GraphAccess;
};

}  // namespace taper
