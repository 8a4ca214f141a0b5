// Pruning control layer: keeps F(rho) tracking the tapering budget F_sched.
//
// Per iteration (after the weight step):
//   K        <- sensitivity estimate of dF per unit d(lambda_F)
//   lambda_F <- -beta * (F(rho) - F_sched) / K           (pure proportional)
//   rho step uses the fresh lambda_F
//   F_sched  <- F_sched - clip((F_sched - F_0)/r, -M, +M)
// with M = mu / (|lambda_F| + guard) when lambda_F < 0 and +inf otherwise:
// the budget stops falling faster than quality pressure allows.
#pragma once

#include <span>

#include "taper/resource.hpp"
#include "taper/rho_solver.hpp"
#include "taper/site.hpp"

namespace taper {

// adaptive: exponential relaxation toward F_0 capped by M (the default).
// pure_feedback: step = mu / (|lambda_F| + guard), floored at F_0.
// exponential: plain (1 - 1/r) relaxation toward F_0, no cap.
enum class ScheduleKind { adaptive, pure_feedback, exponential };

struct ControllerConfig {
  real mu = real(1e-4);          // loss-scale units; retune if the loss scale changes
  real beta = real(0.05);
  real r = real(30000);
  real f0 = real(0);             // MACs; set to the current budget to freeze it
  real lambda_guard = real(1e-6);
  ScheduleKind schedule = ScheduleKind::adaptive;

  void validate() const {
    if (!(mu > 0 && beta > 0 && r > 0 && f0 >= 0 && lambda_guard > 0))
      fail("controller config: mu/beta/r/lambda_guard must be positive, f0 >= 0");
  }
};

struct ControllerState {
  real lambda_f = 0;  // loss per MAC; negative when over budget
  real f_sched = 0;   // MACs
  int64_t iteration = 0;
};

// F_sched(0) = F at the sites' current fractions; lambda_F = 0.
ControllerState init_schedule(const ResourcePolynomial& poly,
                              std::span<const PruningSiteState> sites);

// K = sum_{l,c} (dF/dp_l)^2 * sigmoid'(rho_{l,c}) * alpha_rho / sqrt(D_{l,c} + d_floor).
real compute_k(std::span<const PruningSiteState> sites, std::span<const real> df_dp,
               const RhoSolverConfig& rho_cfg);

// lambda_F <- -beta * (F - F_sched) / K. Replaces, does not accumulate.
void update_lambda(ControllerState& st, real f_current, real k, const ControllerConfig& cfg);

// One budget step of the configured schedule; increments the iteration.
void update_f_sched(ControllerState& st, const ControllerConfig& cfg);

}  // namespace taper
