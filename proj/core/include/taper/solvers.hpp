// Solvers for network weights. The pruning parameters rho have their own
// solver (rho_solver.hpp) and are never visible to these.
#pragma once

#include <string>
#include <vector>

#include "taper/tape.hpp"

namespace taper {

enum class SolverKind { sgd, adam };

struct WeightSolverConfig {
  SolverKind kind = SolverKind::adam;
  real lr = real(1e-3);
  real momentum = real(0.9);     // sgd
  real beta1 = real(0.9);        // adam
  real beta2 = real(0.999);      // adam
  real adam_eps = real(1e-8);    // adam
};

// Per-parameter moment buffers plus the step counter. Accumulator shapes
// always match the parameter shapes they belong to.
class WeightSolver {
 public:
  WeightSolver() = default;
  WeightSolver(WeightSolverConfig cfg, const std::vector<Parameter*>& params);

  // Applies one update from param->grad. Zero grad leaves sgd params
  // unchanged; adam applies only the (decayed) moment history.
  void step(const std::vector<Parameter*>& params);

  void set_lr(real lr) { cfg_.lr = lr; }
  real lr() const { return cfg_.lr; }
  const WeightSolverConfig& config() const { return cfg_; }
  int64_t steps_taken() const { return t_; }

  // Snapshot access: moments are exposed as named tensors.
  struct StateTensor {
    std::string name;
    Tensor* tensor;
  };
  std::vector<StateTensor> state_tensors();
  void set_steps_taken(int64_t t) { t_ = t; }

 private:
  WeightSolverConfig cfg_;
  std::vector<Tensor> m1_;  // sgd velocity / adam first moment
  std::vector<Tensor> m2_;  // adam second moment
  std::vector<std::string> names_;
  int64_t t_ = 0;
};

}  // namespace taper
