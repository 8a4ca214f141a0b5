// Learnable channel-wise dropout gate.
//
// Each channel of each sample is scaled by h(rho, x, eps) with x ~ U(0,1).
// h decreases in x: h = 1 for x <= x_lo, 0 for x >= x_hi, linear in between,
// so that at eps = 0 it reduces to the indicator [x < sigmoid(rho)] and a
// channel survives with probability p = sigmoid(rho). (The decreasing
// orientation is what makes that limit and the Bernoulli(p) retention
// semantics come out right.)
//
// Backward produces two things: the gradient for the activations (h * g) and
// dL/dx per (sample, channel), whose negated batch sum is the surrogate
// gradient of the loss w.r.t. the retention probability p.
#pragma once

#include <cstdint>

#include "taper/site.hpp"
#include "taper/tape.hpp"

namespace taper {

struct GateConfig {
  real epsilon = real(0.5);  // transition-band width; 0 = hard binary gating
  real kappa = real(0.04);   // relative band floor at saturated rho
  real rho_max = real(12);

  void validate() const {
    if (!(epsilon >= 0 && epsilon <= 1)) fail("gate: epsilon %g outside [0,1]", (double)epsilon);
    if (!(kappa > 0 && kappa < 1)) fail("gate: kappa %g outside (0,1)", (double)kappa);
    if (!(rho_max > 0)) fail("gate: rho_max %g must be positive", (double)rho_max);
  }
};

struct GateBoundaries {
  real x_lo, x_hi;
  real gap() const { return x_hi - x_lo; }
};

// x_lo = (1-eps*kappa) * sigmoid(rho-eps), x_hi = eps*kappa + (1-eps*kappa) * sigmoid(rho+eps).
GateBoundaries gate_boundaries(real rho, const GateConfig& cfg);

// Piecewise-linear gate factor in [0,1], non-increasing in x.
real gate_value(real rho, real x, const GateConfig& cfg);

// One forward draw for a site: x and h per (sample, channel) plus the
// per-channel band boundaries.
struct GateSample {
  Tensor x;     // [N,C]
  Tensor h;     // [N,C]
  Tensor x_lo;  // [C]
  Tensor x_hi;  // [C]
};

struct GateRngKey {
  uint64_t seed = 0;
  uint64_t iteration = 0;
  uint64_t site_index = 0;
};

// Samples x per (n,c), computes h and the gated activations.
// activations: [N,C,...]; any trailing spatial dims.
Tensor gate_forward_value(const Tensor& activations, const PruningSiteState& site,
                          const GateConfig& cfg, const GateRngKey& key, GateSample* sample);

// grad_activations = h * upstream; dl0_dx[n,c] = sum_spatial upstream * activations * dh/dx,
// with dh/dx = -1/(x_hi-x_lo) strictly inside the band and 0 outside.
void gate_backward(const Tensor& upstream, const GateSample& sample, const Tensor& activations,
                   Tensor* grad_activations, Tensor* dl0_dx);

// Surrogate gradient w.r.t. p per channel: L0p[c] = -sum_n dl0_dx[n,c].
std::vector<real> l0p_from_dl0_dx(const Tensor& dl0_dx);

// Tape-recorded gate. On backward, accumulates -sum_n dL0/dx into *l0p_out
// (sized [C]) in addition to propagating the activation gradient.
NodeId gate_op(Tape& t, NodeId activations, const PruningSiteState& site, const GateConfig& cfg,
               const GateRngKey& key, std::vector<real>* l0p_out);

// Deterministic eval-mode gate: multiplies channel c by [rho_c > 0].
Tensor gate_eval_value(const Tensor& activations, const PruningSiteState& site);

}  // namespace taper
