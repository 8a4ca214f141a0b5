// Dedicated solver for the pruning parameters rho. Kept fully separate from
// the weight solver: it consumes p-space gradients, normalizes them by a
// running RMS of the data-loss part only, clips, and steps rho inside
// [-rho_max, +rho_max].
#pragma once

#include <span>

#include "taper/site.hpp"

namespace taper {

struct RhoSolverConfig {
  real alpha_rho = real(0.03);   // learning rate
  real delta = real(1) / 200;    // accumulator decay
  real rho_max = real(12);
  real clip_bound = real(3);     // on the normalized gradient
  real d_floor = real(1e-12);    // added under the square root

  void validate() const {
    if (!(alpha_rho > 0 && delta > 0 && rho_max > 0 && clip_bound > 0 && d_floor > 0))
      fail("rho solver config values must all be positive");
  }
};

// One synchronous per-channel update:
//   D       <- (1-delta)*D + delta*L0p^2        (data-loss part only)
//   L'_p     = L0p - lambda_F * gradF_p
//   norm     = clip(L'_p / sqrt(D + d_floor), -clip, +clip)
//   rho     <- clip(rho - alpha_rho * norm, -rho_max, +rho_max)
void rho_step(PruningSiteState& site, std::span<const real> l0p, std::span<const real> grad_f_p,
              real lambda_f, const RhoSolverConfig& cfg);

// Converts a rho-space gradient to a p-space gradient: divides by
// sigmoid'(rho). Used when a gradient arrives w.r.t. rho; the solver itself
// consumes p-space gradients, which sidesteps the sigmoid plateau.
void chain_rule_to_p(std::span<const real> dl_drho, std::span<const real> rho,
                     std::span<real> dl_dp);

}  // namespace taper
