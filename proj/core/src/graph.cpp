#include "taper/graph.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <sstream>

#include "taper/container.hpp"
#include "taper/rng.hpp"

namespace taper {

using nlohmann::json;

namespace {

const char* kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::relu: return "relu";
    case LayerKind::maxpool2d: return "maxpool";
    case LayerKind::dense: return "dense";
    case LayerKind::flatten: return "flatten";
    case LayerKind::concat: return "concat";
    case LayerKind::slice: return "slice";
  }
  return "?";
}

LayerKind kind_from_name(const std::string& s) {
  if (s == "conv2d") return LayerKind::conv2d;
  if (s == "relu") return LayerKind::relu;
  if (s == "maxpool") return LayerKind::maxpool2d;
  if (s == "dense") return LayerKind::dense;
  if (s == "flatten") return LayerKind::flatten;
  if (s == "concat") return LayerKind::concat;
  if (s == "slice") return LayerKind::slice;
  fail("unknown layer kind '%s'", s.c_str());
}

}  // namespace

GraphSpec GraphSpec::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail("graph spec is not valid JSON: %s", e.what());
  }
  GraphSpec s;
  s.version = j.value("version", 1);
  if (s.version != 1) fail("unsupported graph spec version %d", s.version);
  s.name = j.value("name", "net");
  for (auto d : j.at("input")) s.input_shape.push_back(d.get<int64_t>());
  s.init_seed = j.value("init_seed", uint64_t(1));
  s.init_weights = j.value("init_weights", std::string());
  for (const auto& jl : j.at("layers")) {
    LayerDesc d;
    d.name = jl.at("name").get<std::string>();
    d.kind = kind_from_name(jl.at("kind").get<std::string>());
    if (jl.contains("inputs"))
      for (const auto& in : jl.at("inputs")) d.inputs.push_back(in.get<std::string>());
    else if (jl.contains("input"))
      d.inputs.push_back(jl.at("input").get<std::string>());
    d.channels = jl.value("channels", 0);
    d.kernel = jl.value("kernel", 0);
    d.stride = jl.value("stride", 1);
    d.pad = jl.value("pad", 0);
    d.groups = jl.value("groups", 1);
    d.features = jl.value("features", 0);
    d.begin = jl.value("begin", int64_t(0));
    d.end = jl.value("end", int64_t(0));
    s.layers.push_back(std::move(d));
  }
  if (j.contains("sites"))
    for (const auto& js : j.at("sites"))
      s.sites.push_back({js.at("name").get<std::string>(), js.at("tensor").get<std::string>()});
  return s;
}

std::string GraphSpec::to_json() const {
  json j;
  j["version"] = version;
  j["name"] = name;
  j["input"] = input_shape;
  j["init_seed"] = init_seed;
  if (!init_weights.empty()) j["init_weights"] = init_weights;
  j["layers"] = json::array();
  for (const auto& d : layers) {
    json jl;
    jl["name"] = d.name;
    jl["kind"] = kind_name(d.kind);
    if (d.inputs.size() == 1)
      jl["input"] = d.inputs[0];
    else
      jl["inputs"] = d.inputs;
    switch (d.kind) {
      case LayerKind::conv2d:
        jl["channels"] = d.channels;
        jl["kernel"] = d.kernel;
        jl["stride"] = d.stride;
        jl["pad"] = d.pad;
        if (d.groups > 1) jl["groups"] = d.groups;
        break;
      case LayerKind::maxpool2d:
        jl["kernel"] = d.kernel;
        jl["stride"] = d.stride;
        break;
      case LayerKind::dense:
        jl["features"] = d.features;
        break;
      case LayerKind::slice:
        jl["begin"] = d.begin;
        jl["end"] = d.end;
        break;
      default:
        break;
    }
    j["layers"].push_back(jl);
  }
  j["sites"] = json::array();
  for (const auto& st : sites) j["sites"].push_back({{"name", st.name}, {"tensor", st.tensor}});
  return j.dump(2) + "\n";
}

GraphSpec GraphSpec::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open graph spec '%s'", path.c_str());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

void GraphSpec::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) fail("cannot write graph spec '%s'", path.c_str());
  out << to_json();
}

namespace {

// Splits every conv with groups > 1 into per-group slice + conv + one concat
// that keeps the original layer name (so downstream references still resolve).
GraphSpec split_grouped(const GraphSpec& in) {
  GraphSpec out = in;
  out.layers.clear();
  for (const auto& d : in.layers) {
    if (d.kind != LayerKind::conv2d || d.groups <= 1) {
      out.layers.push_back(d);
      continue;
    }
    if (d.channels % d.groups != 0)
      fail("conv %s: %d output channels not divisible by %d groups", d.name.c_str(), d.channels,
           d.groups);
    std::vector<std::string> parts;
    for (int g = 0; g < d.groups; ++g) {
      LayerDesc sl;
      sl.kind = LayerKind::slice;
      sl.name = d.name + "/in" + std::to_string(g);
      sl.inputs = d.inputs;
      sl.begin = -1;        // marker: resolved once the input channel count is known
      sl.end = g;           // group index
      sl.channels = d.groups;  // group count
      out.layers.push_back(sl);

      LayerDesc cv = d;
      cv.groups = 1;
      cv.name = d.name + "/g" + std::to_string(g);
      cv.inputs = {sl.name};
      cv.channels = d.channels / d.groups;
      out.layers.push_back(cv);
      parts.push_back(cv.name);
    }
    LayerDesc cc;
    cc.kind = LayerKind::concat;
    cc.name = d.name;
    cc.inputs = parts;
    out.layers.push_back(cc);
  }
  return out;
}

}  // namespace

InstrumentedGraph InstrumentedGraph::build(const GraphSpec& raw) {
  return build(raw, {});
}

InstrumentedGraph InstrumentedGraph::build(const GraphSpec& raw,
                                           const std::map<std::string, Tensor>& weights) {
  InstrumentedGraph g;
  g.spec_ = split_grouped(raw);
  GraphSpec& spec = g.spec_;

  if (spec.input_shape.empty()) fail("graph %s: empty input shape", spec.name.c_str());

  auto add_tensor = [&](const std::string& name, Shape shape, int producer) -> TensorInfo& {
    if (g.tensors_.count(name)) fail("duplicate tensor name '%s'", name.c_str());
    TensorInfo info;
    info.name = name;
    info.shape = std::move(shape);
    info.producer = producer;
    g.tensor_order_.push_back(name);
    return g.tensors_[name] = std::move(info);
  };
  add_tensor("input", spec.input_shape, -1);

  // Shape inference + parameter creation, in declaration order.
  int param_index = 0;
  auto make_param = [&](const std::string& name, Shape shape, real he_fan) {
    auto p = std::make_unique<Parameter>(name, Tensor::zeros(shape));
    if (he_fan > 0) {
      const real std = std::sqrt(real(2) / he_fan);
      for (int64_t i = 0; i < p->value.numel(); ++i)
        p->value[i] = std * static_cast<real>(rng_normal(spec.init_seed, RngStream::weight_init,
                                                         static_cast<uint64_t>(param_index),
                                                         static_cast<uint64_t>(i)));
    }
    ++param_index;
    g.params_.push_back(std::move(p));
    return static_cast<int>(g.params_.size() - 1);
  };

  for (size_t li = 0; li < spec.layers.size(); ++li) {
    LayerDesc& d = spec.layers[li];
    if (d.name == "input" || g.tensors_.count(d.name))
      fail("layer name '%s' duplicates an existing tensor", d.name.c_str());
    if (d.inputs.empty()) fail("layer %s has no inputs", d.name.c_str());
    for (const auto& in : d.inputs)
      if (!g.tensors_.count(in))
        fail("layer %s references unknown tensor '%s' (layers may only consume "
             "already-declared tensors)",
             d.name.c_str(), in.c_str());

    Layer layer;
    const TensorInfo& in0 = g.tensors_.at(d.inputs[0]);
    switch (d.kind) {
      case LayerKind::conv2d: {
        if (in0.shape.size() != 3)
          fail("conv %s: input '%s' must be [C,H,W], got %s", d.name.c_str(),
               d.inputs[0].c_str(), shape_str(in0.shape).c_str());
        if (d.channels <= 0 || d.kernel <= 0)
          fail("conv %s: channels/kernel must be positive", d.name.c_str());
        // Late-resolve the auto-split slice ranges now that C is known.
        const int64_t C = in0.shape[0];
        int64_t Ho, Wo;
        ops::conv2d_out_hw(in0.shape[1], in0.shape[2], d.kernel, d.kernel, d.stride, d.pad, &Ho,
                           &Wo);
        layer.out_shape = {d.channels, Ho, Wo};
        layer.w_param = make_param(d.name + "/w", {d.channels, C, d.kernel, d.kernel},
                                   static_cast<real>(C * d.kernel * d.kernel));
        layer.b_param = make_param(d.name + "/b", {d.channels}, 0);
        break;
      }
      case LayerKind::dense: {
        if (in0.shape.size() != 1)
          fail("dense %s: input '%s' must be flat [F], got %s (insert a flatten layer)",
               d.name.c_str(), d.inputs[0].c_str(), shape_str(in0.shape).c_str());
        if (d.features <= 0) fail("dense %s: features must be positive", d.name.c_str());
        const int64_t F = in0.shape[0];
        layer.out_shape = {d.features};
        layer.w_param = make_param(d.name + "/w", {d.features, F}, static_cast<real>(F));
        layer.b_param = make_param(d.name + "/b", {d.features}, 0);
        break;
      }
      case LayerKind::relu:
        layer.out_shape = in0.shape;
        break;
      case LayerKind::maxpool2d: {
        if (in0.shape.size() != 3)
          fail("maxpool %s: input must be [C,H,W], got %s", d.name.c_str(),
               shape_str(in0.shape).c_str());
        if (d.kernel <= 0 || d.stride <= 0)
          fail("maxpool %s: kernel/stride must be positive", d.name.c_str());
        int64_t Ho, Wo;
        ops::conv2d_out_hw(in0.shape[1], in0.shape[2], d.kernel, d.kernel, d.stride, 0, &Ho, &Wo);
        layer.out_shape = {in0.shape[0], Ho, Wo};
        break;
      }
      case LayerKind::flatten: {
        int64_t f = 1;
        for (int64_t e : in0.shape) f *= e;
        layer.out_shape = {f};
        break;
      }
      case LayerKind::concat: {
        Shape sh = in0.shape;
        int64_t C = 0;
        for (const auto& in : d.inputs) {
          const TensorInfo& ti = g.tensors_.at(in);
          if (ti.shape.size() != sh.size())
            fail("concat %s: rank mismatch between inputs", d.name.c_str());
          for (size_t k = 1; k < sh.size(); ++k)
            if (ti.shape[k] != sh[k])
              fail("concat %s: trailing extent mismatch %ld vs %ld", d.name.c_str(),
                   (long)ti.shape[k], (long)sh[k]);
          C += ti.shape[0];
        }
        sh[0] = C;
        layer.out_shape = sh;
        break;
      }
      case LayerKind::slice: {
        if (d.begin == -1) {  // auto-split marker
          const int groups_total = d.channels;
          const int64_t C = in0.shape[0];
          if (C % groups_total != 0)
            fail("grouped conv over '%s': %ld input channels not divisible by %d groups",
                 d.inputs[0].c_str(), (long)C, groups_total);
          const int64_t per = C / groups_total;
          const int64_t gidx = d.end;
          d.begin = gidx * per;
          d.end = d.begin + per;
        }
        if (in0.shape.empty() || d.begin < 0 || d.end > in0.shape[0] || d.begin >= d.end)
          fail("slice %s: range [%ld,%ld) invalid for %ld channels", d.name.c_str(),
               (long)d.begin, (long)d.end, in0.shape.empty() ? 0L : (long)in0.shape[0]);
        Shape sh = in0.shape;
        sh[0] = d.end - d.begin;
        layer.out_shape = sh;
        break;
      }
    }
    layer.desc = d;
    add_tensor(d.name, layer.out_shape, static_cast<int>(li));
    for (const auto& in : d.inputs)
      g.tensors_.at(in).consumers.push_back(static_cast<int>(li));
    g.layers_.push_back(std::move(layer));
  }
  if (g.layers_.empty()) fail("graph %s has no layers", spec.name.c_str());
  g.output_tensor_ = spec.layers.back().name;

  // Explicit weights override the random init.
  for (const auto& [name, value] : weights) {
    Parameter* p = g.parameter(name);
    if (!p) fail("weights provide unknown parameter '%s'", name.c_str());
    if (!p->value.same_shape(value))
      fail("parameter %s: provided shape %s != expected %s", name.c_str(),
           shape_str(value.shape()).c_str(), shape_str(p->value.shape()).c_str());
    p->value = value;
  }
  if (!spec.init_weights.empty() && weights.empty()) {
    auto box = read_container(spec.init_weights);
    for (auto& [name, value] : box.tensors) {
      Parameter* p = g.parameter(name);
      if (!p) continue;
      if (!p->value.same_shape(value))
        fail("init weights %s: shape %s != expected %s", name.c_str(),
             shape_str(value.shape()).c_str(), shape_str(p->value.shape()).c_str());
      p->value = value;
    }
  }

  // Sites.
  for (const auto& sd : spec.sites) {
    if (sd.tensor == "input") fail("site %s: the network input cannot be gated", sd.name.c_str());
    auto it = g.tensors_.find(sd.tensor);
    if (it == g.tensors_.end())
      fail("site %s references unknown tensor '%s'", sd.name.c_str(), sd.tensor.c_str());
    if (it->second.site != -1)
      fail("channel dim of tensor '%s' claimed by two sites ('%s' and '%s')", sd.tensor.c_str(),
           spec.sites[static_cast<size_t>(it->second.site)].name.c_str(), sd.name.c_str());
    it->second.site = static_cast<int>(g.sites_.size());
    g.sites_.emplace_back(sd.name, it->second.channels(), real(12));
  }
  g.l0p_.assign(g.sites_.size(), {});

  // Channel provenance (forward): which site gates each channel position as
  // seen by consumers of the tensor.
  for (const auto& tn : g.tensor_order_) {
    TensorInfo& ti = g.tensors_.at(tn);
    const int64_t C = ti.channels();
    ChanMap prov(static_cast<size_t>(C));
    if (ti.producer >= 0) {
      const Layer& L = g.layers_[static_cast<size_t>(ti.producer)];
      switch (L.desc.kind) {
        case LayerKind::conv2d:
        case LayerKind::dense:
          break;  // fresh dim
        case LayerKind::relu:
        case LayerKind::maxpool2d:
          prov = g.tensors_.at(L.desc.inputs[0]).prov;
          break;
        case LayerKind::flatten: {
          const TensorInfo& in = g.tensors_.at(L.desc.inputs[0]);
          const int64_t inner = C / in.channels();
          for (int64_t f = 0; f < C; ++f) prov[static_cast<size_t>(f)] = in.prov[static_cast<size_t>(f / inner)];
          break;
        }
        case LayerKind::slice: {
          const TensorInfo& in = g.tensors_.at(L.desc.inputs[0]);
          for (int64_t c = 0; c < C; ++c)
            prov[static_cast<size_t>(c)] = in.prov[static_cast<size_t>(L.desc.begin + c)];
          break;
        }
        case LayerKind::concat: {
          int64_t off = 0;
          for (const auto& in : L.desc.inputs) {
            const TensorInfo& tin = g.tensors_.at(in);
            for (int64_t c = 0; c < tin.channels(); ++c)
              prov[static_cast<size_t>(off + c)] = tin.prov[static_cast<size_t>(c)];
            off += tin.channels();
          }
          break;
        }
      }
    }
    if (ti.site != -1) {
      for (int64_t c = 0; c < C; ++c) {
        if (prov[static_cast<size_t>(c)].site != -1)
          fail("channel dim of tensor '%s' claimed by two sites ('%s' and '%s')", tn.c_str(),
               g.sites_[static_cast<size_t>(prov[static_cast<size_t>(c)].site)].name.c_str(),
               g.sites_[static_cast<size_t>(ti.site)].name.c_str());
        prov[static_cast<size_t>(c)] = {ti.site, static_cast<int32_t>(c)};
      }
    }
    ti.prov = std::move(prov);
  }

  // Removal control (backward): which site, if any, decides whether each
  // channel can be dropped from the producer. Conservative: any ungated
  // consumption path pins the channel.
  for (auto it = g.tensor_order_.rbegin(); it != g.tensor_order_.rend(); ++it) {
    TensorInfo& ti = g.tensors_.at(*it);
    const int64_t C = ti.channels();
    if (ti.site != -1) {
      ti.ctrl.resize(static_cast<size_t>(C));
      for (int64_t c = 0; c < C; ++c)
        ti.ctrl[static_cast<size_t>(c)] = {ti.site, static_cast<int32_t>(c)};
      continue;
    }
    constexpr int kUnset = -2;
    ChanMap ctrl(static_cast<size_t>(C), ChanRef{kUnset, 0});
    auto merge = [&](int64_t c, ChanRef r) {
      ChanRef& cur = ctrl[static_cast<size_t>(c)];
      if (cur.site == kUnset) {
        cur = r;
      } else if (!(cur == r)) {
        cur = {-1, 0};
      }
    };
    for (int li : ti.consumers) {
      const Layer& L = g.layers_[static_cast<size_t>(li)];
      const TensorInfo& out = g.tensors_.at(L.desc.name);
      switch (L.desc.kind) {
        case LayerKind::conv2d:
        case LayerKind::dense:
          for (int64_t c = 0; c < C; ++c) merge(c, {-1, 0});
          break;
        case LayerKind::relu:
        case LayerKind::maxpool2d:
          for (int64_t c = 0; c < C; ++c) merge(c, out.ctrl[static_cast<size_t>(c)]);
          break;
        case LayerKind::flatten: {
          const int64_t inner = out.channels() / C;
          for (int64_t c = 0; c < C; ++c) {
            ChanRef first = out.ctrl[static_cast<size_t>(c * inner)];
            bool uniform = true;
            for (int64_t i = 1; i < inner && uniform; ++i)
              uniform = out.ctrl[static_cast<size_t>(c * inner + i)] == first;
            merge(c, uniform ? first : ChanRef{-1, 0});
          }
          break;
        }
        case LayerKind::slice:
          for (int64_t c = L.desc.begin; c < L.desc.end; ++c)
            merge(c, out.ctrl[static_cast<size_t>(c - L.desc.begin)]);
          break;
        case LayerKind::concat: {
          int64_t off = 0;
          for (const auto& in : L.desc.inputs) {
            const TensorInfo& tin = g.tensors_.at(in);
            if (in == *it)
              for (int64_t c = 0; c < C; ++c)
                merge(c, out.ctrl[static_cast<size_t>(off + c)]);
            off += tin.channels();
          }
          break;
        }
      }
    }
    for (int64_t c = 0; c < C; ++c)
      if (ctrl[static_cast<size_t>(c)].site == kUnset) ctrl[static_cast<size_t>(c)] = {-1, 0};
    ti.ctrl = std::move(ctrl);
  }

  return g;
}

std::vector<Parameter*> InstrumentedGraph::parameters() {
  std::vector<Parameter*> out;
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

Parameter* InstrumentedGraph::parameter(const std::string& name) {
  for (auto& p : params_)
    if (p->name == name) return p.get();
  return nullptr;
}

const InstrumentedGraph::TensorInfo& InstrumentedGraph::tensor(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) fail("unknown tensor '%s'", name.c_str());
  return it->second;
}

int64_t InstrumentedGraph::num_classes() const {
  const TensorInfo& out = tensor(output_tensor_);
  if (out.shape.size() != 1)
    fail("network output '%s' must be flat logits, got %s", output_tensor_.c_str(),
         shape_str(out.shape).c_str());
  return out.shape[0];
}

NodeId InstrumentedGraph::forward_train(Tape& t, const Tensor& x, const GateConfig& cfg,
                                        uint64_t run_seed, int64_t iteration) {
  cfg.validate();
  for (size_t s = 0; s < sites_.size(); ++s)
    l0p_[s].assign(static_cast<size_t>(sites_[s].channels), real(0));

  std::map<std::string, NodeId> nodes;
  auto expose = [&](const std::string& name, NodeId id) {
    const TensorInfo& ti = tensor(name);
    if (ti.site != -1) {
      GateRngKey key{run_seed, static_cast<uint64_t>(iteration),
                     static_cast<uint64_t>(ti.site)};
      id = gate_op(t, id, sites_[static_cast<size_t>(ti.site)], cfg, key,
                   &l0p_[static_cast<size_t>(ti.site)]);
    }
    nodes[name] = id;
  };

  expose("input", t.input(x));
  for (const Layer& L : layers_) {
    const LayerDesc& d = L.desc;
    NodeId in0 = nodes.at(d.inputs[0]);
    NodeId out = -1;
    switch (d.kind) {
      case LayerKind::conv2d:
        out = ops::conv2d(t, in0, t.param(params_[static_cast<size_t>(L.w_param)].get()),
                          t.param(params_[static_cast<size_t>(L.b_param)].get()), d.stride,
                          d.pad);
        break;
      case LayerKind::dense:
        out = ops::dense(t, in0, t.param(params_[static_cast<size_t>(L.w_param)].get()),
                         t.param(params_[static_cast<size_t>(L.b_param)].get()));
        break;
      case LayerKind::relu:
        out = ops::relu(t, in0);
        break;
      case LayerKind::maxpool2d:
        out = ops::maxpool2d(t, in0, d.kernel, d.stride);
        break;
      case LayerKind::flatten:
        out = ops::flatten(t, in0);
        break;
      case LayerKind::slice:
        out = ops::slice_channels(t, in0, d.begin, d.end);
        break;
      case LayerKind::concat: {
        std::vector<NodeId> ins;
        for (const auto& n : d.inputs) ins.push_back(nodes.at(n));
        out = ops::concat_channels(t, ins);
        break;
      }
    }
    expose(d.name, out);
  }
  return nodes.at(output_tensor_);
}

Tensor InstrumentedGraph::forward_values(const Tensor& x, bool masked) const {
  std::map<std::string, Tensor> vals;
  auto expose = [&](const std::string& name, Tensor v) {
    const TensorInfo& ti = tensor(name);
    if (masked && ti.site != -1)
      v = gate_eval_value(v, sites_[static_cast<size_t>(ti.site)]);
    vals[name] = std::move(v);
  };

  expose("input", x);
  for (const Layer& L : layers_) {
    const LayerDesc& d = L.desc;
    const Tensor& in0 = vals.at(d.inputs[0]);
    Tensor out;
    switch (d.kind) {
      case LayerKind::conv2d:
        out = ops::conv2d_value(in0, params_[static_cast<size_t>(L.w_param)]->value,
                                params_[static_cast<size_t>(L.b_param)]->value, d.stride, d.pad);
        break;
      case LayerKind::dense:
        out = ops::dense_value(in0, params_[static_cast<size_t>(L.w_param)]->value,
                               params_[static_cast<size_t>(L.b_param)]->value);
        break;
      case LayerKind::relu: {
        out = Tensor(in0.shape());
        for (int64_t i = 0; i < in0.numel(); ++i) out[i] = in0[i] > 0 ? in0[i] : real(0);
        break;
      }
      case LayerKind::maxpool2d:
        out = ops::maxpool2d_value(in0, d.kernel, d.stride, nullptr);
        break;
      case LayerKind::flatten: {
        const int64_t N = in0.dim(0);
        out = Tensor({N, in0.numel() / N},
                     std::vector<real>(in0.data(), in0.data() + in0.numel()));
        break;
      }
      case LayerKind::slice: {
        const int64_t N = in0.dim(0), C = in0.dim(1), ci = d.end - d.begin;
        int64_t inner = 1;
        for (int k = 2; k < in0.rank(); ++k) inner *= in0.dim(k);
        Shape sh = in0.shape();
        sh[1] = ci;
        out = Tensor(sh);
        for (int64_t n = 0; n < N; ++n)
          std::copy(in0.data() + (n * C + d.begin) * inner, in0.data() + (n * C + d.end) * inner,
                    out.data() + n * ci * inner);
        break;
      }
      case LayerKind::concat: {
        const int64_t N = in0.dim(0);
        Shape sh = in0.shape();
        int64_t C = 0;
        for (const auto& n : d.inputs) C += vals.at(n).dim(1);
        sh[1] = C;
        int64_t inner = 1;
        for (size_t k = 2; k < sh.size(); ++k) inner *= sh[static_cast<size_t>(k)];
        out = Tensor(sh);
        int64_t off = 0;
        for (const auto& nm : d.inputs) {
          const Tensor& v = vals.at(nm);
          const int64_t ci = v.dim(1);
          for (int64_t n = 0; n < N; ++n)
            std::copy(v.data() + n * ci * inner, v.data() + (n + 1) * ci * inner,
                      out.data() + (n * C + off) * inner);
          off += ci;
        }
        break;
      }
    }
    expose(d.name, std::move(out));
  }
  return vals.at(output_tensor_);
}

Tensor InstrumentedGraph::forward_eval(const Tensor& x) const { return forward_values(x, true); }
Tensor InstrumentedGraph::forward_plain(const Tensor& x) const { return forward_values(x, false); }

}  // namespace taper
