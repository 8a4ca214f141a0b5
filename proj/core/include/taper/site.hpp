// Per-site pruning state: the trainable parameters rho (retention probability
// p = sigmoid(rho)) and the RMS accumulator D used by the rho solver.
#pragma once

#include <string>
#include <vector>

#include "taper/common.hpp"

namespace taper {

struct PruningSiteState {
  std::string name;
  int64_t channels = 0;
  std::vector<real> rho;  // in [-rho_max, +rho_max]
  std::vector<real> d;    // second-moment accumulator, >= 0

  PruningSiteState() = default;
  PruningSiteState(std::string n, int64_t c, real rho_init)
      : name(std::move(n)), channels(c), rho(static_cast<size_t>(c), rho_init),
        d(static_cast<size_t>(c), real(0)) {}

  real p(int64_t c) const { return sigmoid(rho[static_cast<size_t>(c)]); }

  // Estimated fraction of remaining channels, w_l = sum_c sigmoid(rho_c) / n_l.
  real fraction() const {
    real s = 0;
    for (real r : rho) s += sigmoid(r);
    return channels ? s / static_cast<real>(channels) : real(1);
  }

  // Deterministic keep rule used for validation and extraction.
  bool kept(int64_t c) const { return rho[static_cast<size_t>(c)] > 0; }
  int64_t kept_count() const {
    int64_t k = 0;
    for (size_t c = 0; c < rho.size(); ++c) k += rho[c] > 0;
    return k;
  }
};

}  // namespace taper
