// Resource polynomial: estimated multiply-accumulate count of the gated
// network as a polynomial in the per-site retention fractions w_l.
//
// A conv/FC layer whose input channels belong to site a and whose output
// channels are removable under site b contributes a quadratic term
// coeff * w_a * w_b with coeff = n_in * n_out * kernel_area * out_spatial;
// a layer gated on one side contributes a linear term; ungated work goes to
// the constant. Only conv and FC multiplications are counted.
#pragma once

#include <span>
#include <string>
#include <vector>

#include "taper/graph.hpp"
#include "taper/site.hpp"

namespace taper {

struct ResourcePolynomial {
  struct QuadTerm {
    int site_a, site_b;
    real coeff;  // MACs at w_a = w_b = 1
  };
  struct LinTerm {
    int site;
    real coeff;
  };
  std::vector<QuadTerm> quad;
  std::vector<LinTerm> lin;
  real constant = 0;
  int num_sites = 0;

  real full() const;  // value at all w = 1, i.e. the whole-network MAC count
};

// Per-layer cost breakdown backing the polynomial (one row per attribution
// segment); used by the CLI cost report.
struct LayerTerm {
  std::string layer;
  int site_in = -1;
  int site_out = -1;
  int64_t macs = 0;
};

std::vector<LayerTerm> layer_terms(const InstrumentedGraph& g);
ResourcePolynomial build_polynomial(const InstrumentedGraph& g);

std::vector<real> site_fractions(std::span<const PruningSiteState> sites);

real eval_f(const ResourcePolynomial& poly, std::span<const real> w);

// dF/dw per site.
std::vector<real> grad_f_w(const ResourcePolynomial& poly, std::span<const real> w);

// dF/dp per site (identical for every channel of a site): (dF/dw_l) / n_l.
std::vector<real> grad_f_p(const ResourcePolynomial& poly, std::span<const real> w,
                           std::span<const PruningSiteState> sites);

}  // namespace taper
