// Shared test helpers: independent naive oracles and a central
// finite-difference gradient checker. These stay decoupled from the library's
// forward/backward implementations on purpose.
#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <vector>

#include "taper/rng.hpp"
#include "taper/tape.hpp"

namespace taper::testutil {

// Locates a file under configs/ regardless of the ctest working directory.
inline std::string config_path(const char* name) {
  for (const char* base : {"../configs/", "../../configs/", "configs/", "../../../configs/"}) {
    auto p = std::filesystem::path(base) / name;
    if (std::filesystem::exists(p)) return p.string();
  }
  fail("config file not found: %s (run tests from the build tree)", name);
}

inline double rel_err(double a, double b) {
  const double scale = std::max({std::abs(a), std::abs(b), 1e-10});
  return std::abs(a - b) / scale;
}

inline void fill_uniform(Tensor& t, uint64_t key, double lo = -1.0, double hi = 1.0) {
  for (int64_t i = 0; i < t.numel(); ++i)
    t[i] = static_cast<real>(lo + (hi - lo) * rng_uniform(key, RngStream::test,
                                                          static_cast<uint64_t>(i)));
}

// Keeps values away from zero (relu kinks) for finite-difference checks.
inline void fill_uniform_away_from(Tensor& t, uint64_t key, double margin) {
  for (int64_t i = 0; i < t.numel(); ++i) {
    double v = -1.0 + 2.0 * rng_uniform(key, RngStream::test, static_cast<uint64_t>(i));
    if (std::abs(v) < margin) v = v < 0 ? v - margin : v + margin;
    t[i] = static_cast<real>(v);
  }
}

// Naive 7-nested-loop cross-correlation oracle.
inline Tensor naive_conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
                           int pad) {
  const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int64_t K = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const int64_t Ho = (H + 2 * pad - kh) / stride + 1;
  const int64_t Wo = (W + 2 * pad - kw) / stride + 1;
  Tensor y({N, K, Ho, Wo});
  for (int64_t n = 0; n < N; ++n)
    for (int64_t k = 0; k < K; ++k)
      for (int64_t oh = 0; oh < Ho; ++oh)
        for (int64_t ow = 0; ow < Wo; ++ow) {
          double acc = b[k];
          for (int64_t c = 0; c < C; ++c)
            for (int64_t i = 0; i < kh; ++i)
              for (int64_t j = 0; j < kw; ++j) {
                const int64_t ih = oh * stride - pad + i;
                const int64_t iw = ow * stride - pad + j;
                if (ih >= 0 && ih < H && iw >= 0 && iw < W)
                  acc += static_cast<double>(x.at4(n, c, ih, iw)) * w.at4(k, c, i, j);
              }
          y.at4(n, k, oh, ow) = static_cast<real>(acc);
        }
  return y;
}

// Naive grouped conv oracle: weights [K, C/g, kh, kw], group k-blocks.
inline Tensor naive_grouped_conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
                                   int pad, int groups) {
  const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int64_t K = w.dim(0), cg = w.dim(1), kh = w.dim(2), kw = w.dim(3);
  const int64_t kg = K / groups;
  const int64_t Ho = (H + 2 * pad - kh) / stride + 1;
  const int64_t Wo = (W + 2 * pad - kw) / stride + 1;
  Tensor y({N, K, Ho, Wo});
  for (int64_t n = 0; n < N; ++n)
    for (int64_t k = 0; k < K; ++k) {
      const int64_t g = k / kg;
      for (int64_t oh = 0; oh < Ho; ++oh)
        for (int64_t ow = 0; ow < Wo; ++ow) {
          double acc = b[k];
          for (int64_t c = 0; c < cg; ++c)
            for (int64_t i = 0; i < kh; ++i)
              for (int64_t j = 0; j < kw; ++j) {
                const int64_t ih = oh * stride - pad + i;
                const int64_t iw = ow * stride - pad + j;
                if (ih >= 0 && ih < H && iw >= 0 && iw < W)
                  acc += static_cast<double>(x.at4(n, g * cg + c, ih, iw)) * w.at4(k, c, i, j);
              }
          y.at4(n, k, oh, ow) = static_cast<real>(acc);
        }
    }
  return y;
}

// Central finite-difference check of d(loss)/d(inputs[i]) for every element of
// every checked input. `build` must construct the scalar loss node from the
// given tape and leaf nodes.
struct FdReport {
  double max_rel_err = 0;
  int64_t checked = 0;
};

inline FdReport fd_check(std::vector<Tensor> inputs,
                         const std::function<NodeId(Tape&, const std::vector<NodeId>&)>& build,
                         double step = 1e-5, double tol = 1e-4) {
  Tape tape;
  std::vector<NodeId> leaves;
  std::vector<Parameter> params;
  params.reserve(inputs.size());
  for (auto& in : inputs) params.emplace_back("fd", in);
  for (auto& p : params) leaves.push_back(tape.param(&p));
  NodeId loss = build(tape, leaves);
  tape.backward(loss);

  FdReport rep;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    for (int64_t i = 0; i < inputs[pi].numel(); ++i) {
      auto eval = [&](double delta) {
        std::vector<Tensor> shifted = inputs;
        shifted[pi][i] += static_cast<real>(delta);
        Tape t2;
        std::vector<Parameter> p2;
        p2.reserve(shifted.size());
        for (auto& in : shifted) p2.emplace_back("fd", in);
        std::vector<NodeId> l2;
        for (auto& p : p2) l2.push_back(t2.param(&p));
        return static_cast<double>(t2.value(build(t2, l2))[0]);
      };
      const double num = (eval(step) - eval(-step)) / (2 * step);
      const double ana = params[pi].grad[i];
      rep.max_rel_err = std::max(rep.max_rel_err, rel_err(num, ana));
      ++rep.checked;
      if (rel_err(num, ana) > tol) return rep;  // fail fast, report carries the value
    }
  }
  return rep;
}

}  // namespace taper::testutil
