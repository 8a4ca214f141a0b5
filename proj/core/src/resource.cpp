#include "taper/resource.hpp"

#include <map>

namespace taper {

real ResourcePolynomial::full() const {
  real f = constant;
  for (const auto& q : quad) f += q.coeff;
  for (const auto& l : lin) f += l.coeff;
  return f;
}

std::vector<LayerTerm> layer_terms(const InstrumentedGraph& g) {
  std::vector<LayerTerm> out;
  for (const auto& L : g.layers()) {
    const LayerDesc& d = L.desc;
    if (d.kind != LayerKind::conv2d && d.kind != LayerKind::dense) continue;
    const auto& tin = g.tensor(d.inputs[0]);
    const auto& tout = g.tensor(d.name);

    // Positions per owning site on each side (-1 collects ungated positions).
    std::map<int, int64_t> in_count, out_count;
    for (const ChanRef& r : tin.prov) ++in_count[r.site];
    for (const ChanRef& r : tout.ctrl) ++out_count[r.site];

    int64_t per_pair = 1;  // MACs per (input position, output channel) pair
    if (d.kind == LayerKind::conv2d)
      per_pair = static_cast<int64_t>(d.kernel) * d.kernel * L.out_shape[1] * L.out_shape[2];

    for (const auto& [sa, na] : in_count)
      for (const auto& [sb, nb] : out_count)
        out.push_back({d.name, sa, sb, na * nb * per_pair});
  }
  return out;
}

ResourcePolynomial build_polynomial(const InstrumentedGraph& g) {
  ResourcePolynomial poly;
  poly.num_sites = static_cast<int>(g.sites().size());
  std::map<std::pair<int, int>, real> quad;
  std::map<int, real> lin;
  for (const LayerTerm& t : layer_terms(g)) {
    const real macs = static_cast<real>(t.macs);
    if (t.site_in == -1 && t.site_out == -1) {
      poly.constant += macs;
    } else if (t.site_in == -1) {
      lin[t.site_out] += macs;
    } else if (t.site_out == -1) {
      lin[t.site_in] += macs;
    } else {
      auto key = std::minmax(t.site_in, t.site_out);
      quad[{key.first, key.second}] += macs;
    }
  }
  for (const auto& [k, c] : quad) poly.quad.push_back({k.first, k.second, c});
  for (const auto& [s, c] : lin) poly.lin.push_back({s, c});
  return poly;
}

std::vector<real> site_fractions(std::span<const PruningSiteState> sites) {
  std::vector<real> w;
  w.reserve(sites.size());
  for (const auto& s : sites) w.push_back(s.fraction());
  return w;
}

namespace {
void check_w(const ResourcePolynomial& poly, std::span<const real> w) {
  if (static_cast<int>(w.size()) != poly.num_sites)
    fail("resource polynomial over %d sites evaluated with %zu fractions", poly.num_sites,
         w.size());
}
}  // namespace

real eval_f(const ResourcePolynomial& poly, std::span<const real> w) {
  check_w(poly, w);
  real f = poly.constant;
  for (const auto& q : poly.quad)
    f += q.coeff * w[static_cast<size_t>(q.site_a)] * w[static_cast<size_t>(q.site_b)];
  for (const auto& l : poly.lin) f += l.coeff * w[static_cast<size_t>(l.site)];
  return f;
}

std::vector<real> grad_f_w(const ResourcePolynomial& poly, std::span<const real> w) {
  check_w(poly, w);
  std::vector<real> g(w.size(), real(0));
  for (const auto& q : poly.quad) {
    if (q.site_a == q.site_b) {
      g[static_cast<size_t>(q.site_a)] += 2 * q.coeff * w[static_cast<size_t>(q.site_a)];
    } else {
      g[static_cast<size_t>(q.site_a)] += q.coeff * w[static_cast<size_t>(q.site_b)];
      g[static_cast<size_t>(q.site_b)] += q.coeff * w[static_cast<size_t>(q.site_a)];
    }
  }
  for (const auto& l : poly.lin) g[static_cast<size_t>(l.site)] += l.coeff;
  return g;
}

std::vector<real> grad_f_p(const ResourcePolynomial& poly, std::span<const real> w,
                           std::span<const PruningSiteState> sites) {
  auto g = grad_f_w(poly, w);
  if (g.size() != sites.size())
    fail("grad_f_p: %zu sites for a polynomial over %zu", sites.size(), g.size());
  for (size_t l = 0; l < g.size(); ++l) g[l] /= static_cast<real>(sites[l].channels);
  return g;
}

}  // namespace taper
