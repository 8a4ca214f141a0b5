#include "taper/gate.hpp"

#include <memory>

#include "taper/rng.hpp"

namespace taper {

GateBoundaries gate_boundaries(real rho, const GateConfig& cfg) {
  const real ek = cfg.epsilon * cfg.kappa;
  const real x_lo = (real(1) - ek) * sigmoid(rho - cfg.epsilon);
  const real x_hi = ek + (real(1) - ek) * sigmoid(rho + cfg.epsilon);
  return {x_lo, x_hi};
}

real gate_value(real rho, real x, const GateConfig& cfg) {
  const auto [x_lo, x_hi] = gate_boundaries(rho, cfg);
  if (x_hi <= x_lo) return x < x_lo ? real(1) : real(0);  // eps = 0: [x < sigmoid(rho)]
  if (x >= x_hi) return real(0);
  if (x <= x_lo) return real(1);
  return (x_hi - x) / (x_hi - x_lo);
}

namespace {

void check_site(const Tensor& activations, const PruningSiteState& site) {
  if (activations.rank() < 2)
    fail("gate: activations must have a channel dim, got %s",
         shape_str(activations.shape()).c_str());
  if (activations.dim(1) != site.channels)
    fail("gate %s: activation channel extent %ld != site channel count %ld", site.name.c_str(),
         (long)activations.dim(1), (long)site.channels);
}

int64_t inner_extent(const Tensor& t) {
  int64_t inner = 1;
  for (int d = 2; d < t.rank(); ++d) inner *= t.dim(d);
  return inner;
}

}  // namespace

Tensor gate_forward_value(const Tensor& activations, const PruningSiteState& site,
                          const GateConfig& cfg, const GateRngKey& key, GateSample* sample) {
  check_site(activations, site);
  const int64_t N = activations.dim(0), C = activations.dim(1);
  const int64_t inner = inner_extent(activations);

  GateSample s{Tensor({N, C}), Tensor({N, C}), Tensor({C}), Tensor({C})};
  for (int64_t c = 0; c < C; ++c) {
    const auto b = gate_boundaries(site.rho[static_cast<size_t>(c)], cfg);
    s.x_lo[c] = b.x_lo;
    s.x_hi[c] = b.x_hi;
  }
  Tensor out(activations.shape());
  for (int64_t n = 0; n < N; ++n)
    for (int64_t c = 0; c < C; ++c) {
      const real x = static_cast<real>(rng_uniform(
          key.seed, RngStream::gate_noise, key.iteration,
          (key.site_index << 32) | static_cast<uint64_t>(n), static_cast<uint64_t>(c)));
      real h;
      const real x_lo = s.x_lo[c], x_hi = s.x_hi[c];
      if (x_hi <= x_lo) h = x < x_lo ? real(1) : real(0);
      else if (x >= x_hi) h = real(0);
      else if (x <= x_lo) h = real(1);
      else h = (x_hi - x) / (x_hi - x_lo);
      s.x.at2(n, c) = x;
      s.h.at2(n, c) = h;
      const real* src = activations.data() + (n * C + c) * inner;
      real* dst = out.data() + (n * C + c) * inner;
      for (int64_t i = 0; i < inner; ++i) dst[i] = h * src[i];
    }
  if (sample) *sample = std::move(s);
  return out;
}

void gate_backward(const Tensor& upstream, const GateSample& sample, const Tensor& activations,
                   Tensor* grad_activations, Tensor* dl0_dx) {
  if (!upstream.same_shape(activations))
    fail("gate backward: upstream shape %s != activations shape %s",
         shape_str(upstream.shape()).c_str(), shape_str(activations.shape()).c_str());
  const int64_t N = activations.dim(0), C = activations.dim(1);
  if (sample.h.dim(0) != N || sample.h.dim(1) != C)
    fail("gate backward: sample [%ld,%ld] does not match activations [%ld,%ld]",
         (long)sample.h.dim(0), (long)sample.h.dim(1), (long)N, (long)C);
  const int64_t inner = inner_extent(activations);

  if (grad_activations && grad_activations->numel() == 0)
    *grad_activations = Tensor::zeros(activations.shape());
  if (dl0_dx) *dl0_dx = Tensor::zeros({N, C});

  for (int64_t n = 0; n < N; ++n)
    for (int64_t c = 0; c < C; ++c) {
      const real h = sample.h.at2(n, c);
      const real x = sample.x.at2(n, c);
      const real x_lo = sample.x_lo[c], x_hi = sample.x_hi[c];
      const real* up = upstream.data() + (n * C + c) * inner;
      const real* act = activations.data() + (n * C + c) * inner;
      if (grad_activations) {
        real* ga = grad_activations->data() + (n * C + c) * inner;
        for (int64_t i = 0; i < inner; ++i) ga[i] += h * up[i];
      }
      if (dl0_dx && x > x_lo && x < x_hi) {
        const real dh_dx = real(-1) / (x_hi - x_lo);
        real s = 0;
        for (int64_t i = 0; i < inner; ++i) s += up[i] * act[i];
        dl0_dx->at2(n, c) = s * dh_dx;
      }
    }
}

std::vector<real> l0p_from_dl0_dx(const Tensor& dl0_dx) {
  const int64_t N = dl0_dx.dim(0), C = dl0_dx.dim(1);
  std::vector<real> l0p(static_cast<size_t>(C), real(0));
  for (int64_t n = 0; n < N; ++n)
    for (int64_t c = 0; c < C; ++c) l0p[static_cast<size_t>(c)] -= dl0_dx.at2(n, c);
  return l0p;
}

NodeId gate_op(Tape& t, NodeId activations, const PruningSiteState& site, const GateConfig& cfg,
               const GateRngKey& key, std::vector<real>* l0p_out) {
  auto sample = std::make_shared<GateSample>();
  Tensor out = gate_forward_value(t.value(activations), site, cfg, key, sample.get());
  return t.apply("gate", {activations}, std::move(out), [=](Tape& tp, const Tensor& up) {
    const Tensor& act = tp.value(activations);
    Tensor dl0_dx;
    gate_backward(up, *sample, act, &tp.grad_buf(activations), l0p_out ? &dl0_dx : nullptr);
    if (l0p_out) {
      auto l0p = l0p_from_dl0_dx(dl0_dx);
      if (l0p_out->size() != l0p.size()) l0p_out->assign(l0p.size(), real(0));
      for (size_t c = 0; c < l0p.size(); ++c) (*l0p_out)[c] += l0p[c];
    }
  });
}

Tensor gate_eval_value(const Tensor& activations, const PruningSiteState& site) {
  check_site(activations, site);
  const int64_t N = activations.dim(0), C = activations.dim(1);
  const int64_t inner = inner_extent(activations);
  Tensor out(activations.shape());
  for (int64_t n = 0; n < N; ++n)
    for (int64_t c = 0; c < C; ++c) {
      const real* src = activations.data() + (n * C + c) * inner;
      real* dst = out.data() + (n * C + c) * inner;
      if (site.kept(c))
        std::copy(src, src + inner, dst);
      else
        std::fill(dst, dst + inner, real(0));
    }
  return out;
}

}  // namespace taper
