#include "taper/controller.hpp"

#include <cmath>
#include <limits>

namespace taper {

ControllerState init_schedule(const ResourcePolynomial& poly,
                              std::span<const PruningSiteState> sites) {
  auto w = site_fractions(sites);
  ControllerState st;
  st.f_sched = eval_f(poly, w);
  st.lambda_f = 0;
  st.iteration = 0;
  if (!(st.f_sched > 0)) fail("initial resource budget must be positive, got %g", (double)st.f_sched);
  return st;
}

real compute_k(std::span<const PruningSiteState> sites, std::span<const real> df_dp,
               const RhoSolverConfig& rho_cfg) {
  if (sites.size() != df_dp.size())
    fail("compute_k: %zu sites but %zu dF/dp entries", sites.size(), df_dp.size());
  real k = 0;
  for (size_t l = 0; l < sites.size(); ++l) {
    const real g2 = df_dp[l] * df_dp[l];
    const PruningSiteState& s = sites[l];
    for (size_t c = 0; c < s.rho.size(); ++c)
      k += g2 * sigmoid_deriv(s.rho[c]) * rho_cfg.alpha_rho / std::sqrt(s.d[c] + rho_cfg.d_floor);
  }
  return k;
}

void update_lambda(ControllerState& st, real f_current, real k, const ControllerConfig& cfg) {
  if (!(k > 0) || !std::isfinite(k))
    fail("controller fault: sensitivity K=%g (iteration %lld, F=%g, F_sched=%g); "
         "no gated resource terms?",
         (double)k, (long long)st.iteration, (double)f_current, (double)st.f_sched);
  st.lambda_f = -cfg.beta * (f_current - st.f_sched) / k;
  if (!std::isfinite(st.lambda_f))
    fail("controller fault: non-finite lambda_F at iteration %lld", (long long)st.iteration);
}

void update_f_sched(ControllerState& st, const ControllerConfig& cfg) {
  cfg.validate();
  switch (cfg.schedule) {
    case ScheduleKind::adaptive: {
      real m = std::numeric_limits<real>::infinity();
      if (st.lambda_f < 0) m = cfg.mu / (std::abs(st.lambda_f) + cfg.lambda_guard);
      const real decay = (st.f_sched - cfg.f0) / cfg.r;
      st.f_sched -= clip(decay, -m, m);
      break;
    }
    case ScheduleKind::exponential:
      st.f_sched -= (st.f_sched - cfg.f0) / cfg.r;
      break;
    case ScheduleKind::pure_feedback: {
      const real step = cfg.mu / (std::abs(st.lambda_f) + cfg.lambda_guard);
      st.f_sched = std::max(st.f_sched - step, cfg.f0);
      break;
    }
  }
  ++st.iteration;
}

}  // namespace taper
