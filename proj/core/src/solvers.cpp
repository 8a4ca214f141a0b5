#include "taper/solvers.hpp"

#include <cmath>

namespace taper {

WeightSolver::WeightSolver(WeightSolverConfig cfg, const std::vector<Parameter*>& params)
    : cfg_(cfg) {
  for (Parameter* p : params) {
    m1_.push_back(Tensor::zeros(p->value.shape()));
    if (cfg_.kind == SolverKind::adam) m2_.push_back(Tensor::zeros(p->value.shape()));
    names_.push_back(p->name);
  }
}

void WeightSolver::step(const std::vector<Parameter*>& params) {
  if (params.size() != m1_.size())
    fail("weight solver built for %zu parameters, got %zu", m1_.size(), params.size());
  ++t_;
  for (size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    if (!p.grad.same_shape(p.value))
      fail("parameter %s: grad shape %s != value shape %s", p.name.c_str(),
           shape_str(p.grad.shape()).c_str(), shape_str(p.value.shape()).c_str());
    const int64_t n = p.value.numel();
    if (cfg_.kind == SolverKind::sgd) {
      Tensor& v = m1_[i];
      for (int64_t j = 0; j < n; ++j) {
        v[j] = cfg_.momentum * v[j] + p.grad[j];
        p.value[j] -= cfg_.lr * v[j];
      }
    } else {
      Tensor& m = m1_[i];
      Tensor& v = m2_[i];
      const real bc1 = real(1) - std::pow(cfg_.beta1, static_cast<real>(t_));
      const real bc2 = real(1) - std::pow(cfg_.beta2, static_cast<real>(t_));
      for (int64_t j = 0; j < n; ++j) {
        const real g = p.grad[j];
        m[j] = cfg_.beta1 * m[j] + (real(1) - cfg_.beta1) * g;
        v[j] = cfg_.beta2 * v[j] + (real(1) - cfg_.beta2) * g * g;
        const real mh = m[j] / bc1;
        const real vh = v[j] / bc2;
        p.value[j] -= cfg_.lr * mh / (std::sqrt(vh) + cfg_.adam_eps);
      }
    }
  }
}

std::vector<WeightSolver::StateTensor> WeightSolver::state_tensors() {
  std::vector<StateTensor> out;
  for (size_t i = 0; i < m1_.size(); ++i)
    out.push_back({"solver/" + names_[i] + "/m1", &m1_[i]});
  for (size_t i = 0; i < m2_.size(); ++i)
    out.push_back({"solver/" + names_[i] + "/m2", &m2_[i]});
  return out;
}

}  // namespace taper
