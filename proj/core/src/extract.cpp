#include "taper/extract.hpp"

#include <algorithm>
#include <map>
#include <set>

namespace taper {

namespace {

int64_t popcount(const std::vector<char>& m, int64_t begin, int64_t end) {
  int64_t k = 0;
  for (int64_t i = begin; i < end; ++i) k += m[static_cast<size_t>(i)] != 0;
  return k;
}
int64_t popcount(const std::vector<char>& m) { return popcount(m, 0, static_cast<int64_t>(m.size())); }

}  // namespace

PrunedConfiguration extract(const InstrumentedGraph& g, bool allow_dead_branches) {
  PrunedConfiguration out;
  const auto& sites = g.sites();
  for (const auto& s : sites) {
    std::vector<char> keep(static_cast<size_t>(s.channels));
    for (int64_t c = 0; c < s.channels; ++c) keep[static_cast<size_t>(c)] = s.kept(c);
    if (popcount(keep) == 0 && !allow_dead_branches)
      fail("extraction: site %s keeps 0 of %ld channels; the network would be disconnected",
           s.name.c_str(), (long)s.channels);
    out.keep.push_back(std::move(keep));
  }

  // Per-tensor keep masks. A conv/dense output absorbs the downstream gate via
  // its ctrl map; everything else inherits. Applying the tensor's own gate
  // must then be a no-op, otherwise some other consumer pins the channels and
  // they cannot be physically removed.
  std::map<std::string, std::vector<char>> mask;
  auto kept_ref = [&](const ChanRef& r) -> char {
    return r.site == -1 ? 1 : out.keep[static_cast<size_t>(r.site)][static_cast<size_t>(r.idx)];
  };

  const auto& spec = g.spec();
  mask["input"] = std::vector<char>(static_cast<size_t>(g.tensor("input").channels()), 1);
  for (const auto& L : g.layers()) {
    const LayerDesc& d = L.desc;
    const auto& ti = g.tensor(d.name);
    const int64_t C = ti.channels();
    std::vector<char> m(static_cast<size_t>(C), 1);
    switch (d.kind) {
      case LayerKind::conv2d:
      case LayerKind::dense:
        for (int64_t c = 0; c < C; ++c) m[static_cast<size_t>(c)] = kept_ref(ti.ctrl[static_cast<size_t>(c)]);
        break;
      case LayerKind::relu:
      case LayerKind::maxpool2d:
        m = mask.at(d.inputs[0]);
        break;
      case LayerKind::flatten: {
        const auto& mi = mask.at(d.inputs[0]);
        const int64_t inner = C / static_cast<int64_t>(mi.size());
        for (int64_t c = 0; c < static_cast<int64_t>(mi.size()); ++c)
          std::fill_n(m.begin() + c * inner, inner, mi[static_cast<size_t>(c)]);
        break;
      }
      case LayerKind::slice: {
        const auto& mi = mask.at(d.inputs[0]);
        m.assign(mi.begin() + d.begin, mi.begin() + d.end);
        break;
      }
      case LayerKind::concat: {
        m.clear();
        for (const auto& in : d.inputs) {
          const auto& mi = mask.at(in);
          m.insert(m.end(), mi.begin(), mi.end());
        }
        break;
      }
    }
    if (ti.site != -1) {
      const auto& keep = out.keep[static_cast<size_t>(ti.site)];
      for (int64_t c = 0; c < C; ++c) {
        if (!keep[static_cast<size_t>(c)] && m[static_cast<size_t>(c)])
          fail("extraction: pruned channel %ld of site %s (tensor '%s') cannot be removed from "
               "its producer; another consumer still needs it",
               (long)c, sites[static_cast<size_t>(ti.site)].name.c_str(), d.name.c_str());
        m[static_cast<size_t>(c)] = m[static_cast<size_t>(c)] && keep[static_cast<size_t>(c)];
      }
    }
    mask[d.name] = std::move(m);
  }

  // Which layers survive: drop concat inputs with zero kept channels (when
  // allowed), then keep only layers reachable from the network output.
  const std::string output = spec.layers.back().name;
  std::map<std::string, std::vector<std::string>> live_inputs;
  for (const auto& L : g.layers()) {
    std::vector<std::string> ins = L.desc.inputs;
    if (L.desc.kind == LayerKind::concat) {
      std::vector<std::string> kept_ins;
      for (const auto& in : ins)
        if (popcount(mask.at(in)) > 0) kept_ins.push_back(in);
      if (kept_ins.empty())
        fail("extraction: every input of concat %s is empty", L.desc.name.c_str());
      ins = std::move(kept_ins);
    }
    for (const auto& in : ins)
      if (in != "input" && popcount(mask.at(in)) == 0)
        fail("extraction: tensor '%s' keeps 0 channels; consumer %s would be disconnected",
             in.c_str(), L.desc.name.c_str());
    live_inputs[L.desc.name] = std::move(ins);
  }
  std::set<std::string> needed{output};
  for (auto it = g.layers().rbegin(); it != g.layers().rend(); ++it)
    if (needed.count(it->desc.name))
      for (const auto& in : live_inputs.at(it->desc.name)) needed.insert(in);

  // Emit the pruned spec and sliced weights.
  out.spec.version = spec.version;
  out.spec.name = spec.name + ".pruned";
  out.spec.input_shape = spec.input_shape;
  out.spec.init_seed = spec.init_seed;

  for (const auto& L : g.layers()) {
    const LayerDesc& d = L.desc;
    if (!needed.count(d.name)) continue;
    LayerDesc nd = d;
    nd.inputs = live_inputs.at(d.name);
    const auto& mout = mask.at(d.name);
    const int64_t kept_out = popcount(mout);
    switch (d.kind) {
      case LayerKind::conv2d: {
        const auto& min = mask.at(d.inputs[0]);
        const int64_t kept_in = popcount(min);
        nd.channels = static_cast<int>(kept_out);
        const Tensor& w = g.parameter(d.name + "/w")->value;
        const Tensor& b = g.parameter(d.name + "/b")->value;
        Tensor nw({kept_out, kept_in, d.kernel, d.kernel});
        Tensor nb({kept_out});
        const int64_t kk = static_cast<int64_t>(d.kernel) * d.kernel;
        int64_t ko = 0;
        for (int64_t o = 0; o < static_cast<int64_t>(mout.size()); ++o) {
          if (!mout[static_cast<size_t>(o)]) continue;
          int64_t ki = 0;
          for (int64_t i = 0; i < static_cast<int64_t>(min.size()); ++i) {
            if (!min[static_cast<size_t>(i)]) continue;
            std::copy(w.data() + (o * static_cast<int64_t>(min.size()) + i) * kk,
                      w.data() + (o * static_cast<int64_t>(min.size()) + i + 1) * kk,
                      nw.data() + (ko * kept_in + ki) * kk);
            ++ki;
          }
          nb[ko] = b[o];
          ++ko;
        }
        out.weights.add(d.name + "/w", std::move(nw));
        out.weights.add(d.name + "/b", std::move(nb));
        out.mac_count += kept_in * kept_out * kk * L.out_shape[1] * L.out_shape[2];
        break;
      }
      case LayerKind::dense: {
        const auto& min = mask.at(d.inputs[0]);
        const int64_t kept_in = popcount(min);
        nd.features = static_cast<int>(kept_out);
        const Tensor& w = g.parameter(d.name + "/w")->value;
        const Tensor& b = g.parameter(d.name + "/b")->value;
        Tensor nw({kept_out, kept_in});
        Tensor nb({kept_out});
        int64_t ko = 0;
        for (int64_t o = 0; o < static_cast<int64_t>(mout.size()); ++o) {
          if (!mout[static_cast<size_t>(o)]) continue;
          int64_t ki = 0;
          for (int64_t i = 0; i < static_cast<int64_t>(min.size()); ++i) {
            if (!min[static_cast<size_t>(i)]) continue;
            nw.at2(ko, ki) = w.at2(o, i);
            ++ki;
          }
          nb[ko] = b[o];
          ++ko;
        }
        out.weights.add(d.name + "/w", std::move(nw));
        out.weights.add(d.name + "/b", std::move(nb));
        out.mac_count += kept_in * kept_out;
        break;
      }
      case LayerKind::slice: {
        const auto& mp = mask.at(d.inputs[0]);
        nd.begin = popcount(mp, 0, d.begin);
        nd.end = nd.begin + popcount(mp, d.begin, d.end);
        break;
      }
      default:
        break;
    }
    out.spec.layers.push_back(std::move(nd));
  }
  return out;
}

int64_t spec_mac_count(const GraphSpec& raw) {
  GraphSpec spec = raw;
  spec.init_weights.clear();
  spec.sites.clear();
  InstrumentedGraph g = InstrumentedGraph::build(spec);
  int64_t macs = 0;
  for (const auto& L : g.layers()) {
    const LayerDesc& d = L.desc;
    if (d.kind == LayerKind::conv2d) {
      const int64_t cin = g.tensor(d.inputs[0]).channels();
      macs += cin * d.channels * d.kernel * d.kernel * L.out_shape[1] * L.out_shape[2];
    } else if (d.kind == LayerKind::dense) {
      macs += g.tensor(d.inputs[0]).channels() * d.features;
    }
  }
  return macs;
}

}  // namespace taper
