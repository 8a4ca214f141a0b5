#include "taper/rho_solver.hpp"

#include <cmath>

namespace taper {

void rho_step(PruningSiteState& site, std::span<const real> l0p, std::span<const real> grad_f_p,
              real lambda_f, const RhoSolverConfig& cfg) {
  const size_t n = site.rho.size();
  if (l0p.size() != n || grad_f_p.size() != n)
    fail("rho_step %s: gradient extents %zu/%zu != channel count %zu", site.name.c_str(),
         l0p.size(), grad_f_p.size(), n);
  if (!std::isfinite(lambda_f)) fail("rho_step %s: non-finite lambda_F", site.name.c_str());
  for (size_t c = 0; c < n; ++c) {
    if (!std::isfinite(l0p[c]) || !std::isfinite(grad_f_p[c]))
      fail("rho_step %s: non-finite gradient at channel %zu (L0p=%g, dF/dp=%g)",
           site.name.c_str(), c, (double)l0p[c], (double)grad_f_p[c]);
    site.d[c] = (real(1) - cfg.delta) * site.d[c] + cfg.delta * l0p[c] * l0p[c];
    const real lp = l0p[c] - lambda_f * grad_f_p[c];
    const real norm = clip(lp / std::sqrt(site.d[c] + cfg.d_floor), -cfg.clip_bound,
                           cfg.clip_bound);
    site.rho[c] = clip(site.rho[c] - cfg.alpha_rho * norm, -cfg.rho_max, cfg.rho_max);
  }
}

void chain_rule_to_p(std::span<const real> dl_drho, std::span<const real> rho,
                     std::span<real> dl_dp) {
  if (dl_drho.size() != rho.size() || dl_dp.size() != rho.size())
    fail("chain_rule_to_p: extent mismatch %zu/%zu/%zu", dl_drho.size(), rho.size(), dl_dp.size());
  for (size_t c = 0; c < rho.size(); ++c) dl_dp[c] = dl_drho[c] / sigmoid_deriv(rho[c]);
}

}  // namespace taper
