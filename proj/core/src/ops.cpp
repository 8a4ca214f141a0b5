#include "taper/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

namespace taper {
namespace ops {

using MatRM = Eigen::Matrix<real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using MapCM = Eigen::Map<const MatRM>;

void conv2d_out_hw(int64_t H, int64_t W, int64_t kh, int64_t kw, int stride, int pad, int64_t* Ho,
                   int64_t* Wo) {
  int64_t eh = H + 2 * pad - kh;
  int64_t ew = W + 2 * pad - kw;
  if (eh < 0 || ew < 0)
    fail("conv/pool kernel %ldx%ld larger than padded input %ldx%ld", (long)kh, (long)kw,
         (long)(H + 2 * pad), (long)(W + 2 * pad));
  if (eh % stride != 0 || ew % stride != 0)
    fail("conv/pool geometry not exact: input %ldx%ld kernel %ldx%ld stride %d pad %d", (long)H,
         (long)W, (long)kh, (long)kw, stride, pad);
  *Ho = eh / stride + 1;
  *Wo = ew / stride + 1;
}

namespace {

// col[C*kh*kw, N*Ho*Wo]; column index = (n*Ho + oh)*Wo + ow.
void im2col(const Tensor& x, int64_t kh, int64_t kw, int stride, int pad, int64_t Ho, int64_t Wo,
            Tensor& col) {
  const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int64_t cols = N * Ho * Wo;
  real* cp = col.data();
  const real* xp = x.data();
  for (int64_t c = 0; c < C; ++c)
    for (int64_t i = 0; i < kh; ++i)
      for (int64_t j = 0; j < kw; ++j) {
        const int64_t row = (c * kh + i) * kw + j;
        real* dst = cp + row * cols;
        for (int64_t n = 0; n < N; ++n) {
          const real* xn = xp + (n * C + c) * H * W;
          for (int64_t oh = 0; oh < Ho; ++oh) {
            const int64_t ih = oh * stride - pad + i;
            const bool hin = ih >= 0 && ih < H;
            for (int64_t ow = 0; ow < Wo; ++ow) {
              const int64_t iw = ow * stride - pad + j;
              *dst++ = (hin && iw >= 0 && iw < W) ? xn[ih * W + iw] : real(0);
            }
          }
        }
      }
}

void col2im_add(const Tensor& col, int64_t kh, int64_t kw, int stride, int pad, int64_t Ho,
                int64_t Wo, Tensor& dx) {
  const int64_t N = dx.dim(0), C = dx.dim(1), H = dx.dim(2), W = dx.dim(3);
  const int64_t cols = N * Ho * Wo;
  const real* cp = col.data();
  real* xp = dx.data();
  for (int64_t c = 0; c < C; ++c)
    for (int64_t i = 0; i < kh; ++i)
      for (int64_t j = 0; j < kw; ++j) {
        const int64_t row = (c * kh + i) * kw + j;
        const real* src = cp + row * cols;
        for (int64_t n = 0; n < N; ++n) {
          real* xn = xp + (n * C + c) * H * W;
          for (int64_t oh = 0; oh < Ho; ++oh) {
            const int64_t ih = oh * stride - pad + i;
            const bool hin = ih >= 0 && ih < H;
            for (int64_t ow = 0; ow < Wo; ++ow, ++src) {
              const int64_t iw = ow * stride - pad + j;
              if (hin && iw >= 0 && iw < W) xn[ih * W + iw] += *src;
            }
          }
        }
      }
}

void check_rank(const Tensor& t, int rank, const char* op, const char* what) {
  if (t.rank() != rank)
    fail("%s: %s must have rank %d, got shape %s", op, what, rank, shape_str(t.shape()).c_str());
}

}  // namespace

Tensor conv2d_value(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
  check_rank(x, 4, "conv2d", "input");
  check_rank(w, 4, "conv2d", "weights");
  const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int64_t K = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  if (w.dim(1) != C)
    fail("conv2d: input channel extent %ld != weight channel extent %ld", (long)C,
         (long)w.dim(1));
  if (b.numel() != K)
    fail("conv2d: bias extent %ld != output channel extent %ld", (long)b.numel(), (long)K);
  int64_t Ho, Wo;
  conv2d_out_hw(H, W, kh, kw, stride, pad, &Ho, &Wo);

  Tensor col({C * kh * kw, N * Ho * Wo});
  im2col(x, kh, kw, stride, pad, Ho, Wo, col);
  Tensor ymat({K, N * Ho * Wo});
  MapM(ymat.data(), K, N * Ho * Wo).noalias() =
      MapCM(w.data(), K, C * kh * kw) * MapCM(col.data(), C * kh * kw, N * Ho * Wo);

  Tensor y({N, K, Ho, Wo});
  const int64_t HW = Ho * Wo;
  for (int64_t n = 0; n < N; ++n)
    for (int64_t k = 0; k < K; ++k) {
      const real* src = ymat.data() + k * N * HW + n * HW;
      real* dst = y.data() + (n * K + k) * HW;
      const real bk = b[k];
      for (int64_t i = 0; i < HW; ++i) dst[i] = src[i] + bk;
    }
  return y;
}

NodeId conv2d(Tape& t, NodeId x, NodeId w, NodeId b, int stride, int pad) {
  const Tensor& xv = t.value(x);
  const Tensor& wv = t.value(w);
  const Tensor& bv = t.value(b);
  Tensor y = conv2d_value(xv, wv, bv, stride, pad);

  const int64_t N = xv.dim(0), C = xv.dim(1);
  const int64_t K = wv.dim(0), kh = wv.dim(2), kw = wv.dim(3);
  const int64_t Ho = y.dim(2), Wo = y.dim(3), HW = Ho * Wo;

  // Recompute col in backward instead of caching it: the col matrix is the
  // largest buffer in the pass and rebuilding it is cheap next to the GEMMs.
  return t.apply("conv2d", {x, w, b}, std::move(y),
                 [=](Tape& tp, const Tensor& up) {
                   const Tensor& xin = tp.value(x);
                   const Tensor& win = tp.value(w);
                   Tensor dymat({K, N * HW});
                   for (int64_t n = 0; n < N; ++n)
                     for (int64_t k = 0; k < K; ++k) {
                       const real* src = up.data() + (n * K + k) * HW;
                       real* dst = dymat.data() + k * N * HW + n * HW;
                       std::copy(src, src + HW, dst);
                     }
                   Tensor col({C * kh * kw, N * HW});
                   im2col(xin, kh, kw, stride, pad, Ho, Wo, col);

                   Tensor& dw = tp.grad_buf(w);
                   MapM(dw.data(), K, C * kh * kw).noalias() +=
                       MapCM(dymat.data(), K, N * HW) * MapCM(col.data(), C * kh * kw, N * HW).transpose();

                   Tensor& db = tp.grad_buf(b);
                   for (int64_t k = 0; k < K; ++k) {
                     real s = 0;
                     const real* row = dymat.data() + k * N * HW;
                     for (int64_t i = 0; i < N * HW; ++i) s += row[i];
                     db[k] += s;
                   }

                   Tensor dcol({C * kh * kw, N * HW});
                   MapM(dcol.data(), C * kh * kw, N * HW).noalias() =
                       MapCM(win.data(), K, C * kh * kw).transpose() * MapCM(dymat.data(), K, N * HW);
                   col2im_add(dcol, kh, kw, stride, pad, Ho, Wo, tp.grad_buf(x));
                 });
}

Tensor dense_value(const Tensor& x, const Tensor& w, const Tensor& b) {
  check_rank(x, 2, "dense", "input");
  check_rank(w, 2, "dense", "weights");
  const int64_t N = x.dim(0), Fin = x.dim(1), out = w.dim(0);
  if (w.dim(1) != Fin)
    fail("dense: input feature extent %ld != weight feature extent %ld", (long)Fin,
         (long)w.dim(1));
  if (b.numel() != out)
    fail("dense: bias extent %ld != output extent %ld", (long)b.numel(), (long)out);
  Tensor y({N, out});
  MapM(y.data(), N, out).noalias() =
      MapCM(x.data(), N, Fin) * MapCM(w.data(), out, Fin).transpose();
  for (int64_t n = 0; n < N; ++n)
    for (int64_t o = 0; o < out; ++o) y.at2(n, o) += b[o];
  return y;
}

NodeId dense(Tape& t, NodeId x, NodeId w, NodeId b) {
  Tensor y = dense_value(t.value(x), t.value(w), t.value(b));
  const int64_t N = t.value(x).dim(0), Fin = t.value(x).dim(1), out = t.value(w).dim(0);
  return t.apply("dense", {x, w, b}, std::move(y), [=](Tape& tp, const Tensor& up) {
    const Tensor& xin = tp.value(x);
    const Tensor& win = tp.value(w);
    MapM(tp.grad_buf(x).data(), N, Fin).noalias() +=
        MapCM(up.data(), N, out) * MapCM(win.data(), out, Fin);
    MapM(tp.grad_buf(w).data(), out, Fin).noalias() +=
        MapCM(up.data(), N, out).transpose() * MapCM(xin.data(), N, Fin);
    Tensor& db = tp.grad_buf(b);
    for (int64_t n = 0; n < N; ++n)
      for (int64_t o = 0; o < out; ++o) db[o] += up.at2(n, o);
  });
}

NodeId relu(Tape& t, NodeId x) {
  const Tensor& xv = t.value(x);
  Tensor y(xv.shape());
  for (int64_t i = 0; i < xv.numel(); ++i) y[i] = xv[i] > 0 ? xv[i] : real(0);
  return t.apply("relu", {x}, std::move(y), [=](Tape& tp, const Tensor& up) {
    const Tensor& xin = tp.value(x);
    Tensor& dx = tp.grad_buf(x);
    for (int64_t i = 0; i < xin.numel(); ++i)
      if (xin[i] > 0) dx[i] += up[i];
  });
}

Tensor maxpool2d_value(const Tensor& x, int kernel, int stride, std::vector<int32_t>* argmax) {
  check_rank(x, 4, "maxpool2d", "input");
  const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  int64_t Ho, Wo;
  conv2d_out_hw(H, W, kernel, kernel, stride, 0, &Ho, &Wo);
  Tensor y({N, C, Ho, Wo});
  if (argmax) argmax->assign(static_cast<size_t>(y.numel()), 0);
  int64_t o = 0;
  for (int64_t n = 0; n < N; ++n)
    for (int64_t c = 0; c < C; ++c) {
      const real* xp = x.data() + (n * C + c) * H * W;
      for (int64_t oh = 0; oh < Ho; ++oh)
        for (int64_t ow = 0; ow < Wo; ++ow, ++o) {
          real best = -std::numeric_limits<real>::infinity();
          int32_t bi = 0;
          for (int64_t i = 0; i < kernel; ++i)
            for (int64_t j = 0; j < kernel; ++j) {
              const int64_t ih = oh * stride + i, iw = ow * stride + j;
              const real v = xp[ih * W + iw];
              if (v > best) {
                best = v;
                bi = static_cast<int32_t>(ih * W + iw);
              }
            }
          y[o] = best;
          if (argmax) (*argmax)[static_cast<size_t>(o)] = bi;
        }
    }
  return y;
}

NodeId maxpool2d(Tape& t, NodeId x, int kernel, int stride) {
  auto argmax = std::make_shared<std::vector<int32_t>>();
  Tensor y = maxpool2d_value(t.value(x), kernel, stride, argmax.get());
  const int64_t N = y.dim(0), C = y.dim(1), HWo = y.dim(2) * y.dim(3);
  const int64_t HW = t.value(x).dim(2) * t.value(x).dim(3);
  return t.apply("maxpool2d", {x}, std::move(y), [=](Tape& tp, const Tensor& up) {
    Tensor& dx = tp.grad_buf(x);
    int64_t o = 0;
    for (int64_t nc = 0; nc < N * C; ++nc) {
      real* dxp = dx.data() + nc * HW;
      for (int64_t i = 0; i < HWo; ++i, ++o) dxp[(*argmax)[static_cast<size_t>(o)]] += up[o];
    }
  });
}

NodeId softmax_cross_entropy(Tape& t, NodeId logits, std::span<const int> labels) {
  const Tensor& z = t.value(logits);
  check_rank(z, 2, "softmax_cross_entropy", "logits");
  const int64_t N = z.dim(0), M = z.dim(1);
  if (static_cast<int64_t>(labels.size()) != N)
    fail("softmax_cross_entropy: %zu labels for batch extent %ld", labels.size(), (long)N);
  auto prob = std::make_shared<Tensor>(Shape{N, M});
  real loss = 0;
  for (int64_t n = 0; n < N; ++n) {
    const int y = labels[static_cast<size_t>(n)];
    if (y < 0 || y >= M) fail("softmax_cross_entropy: label %d outside [0,%ld)", y, (long)M);
    real mx = z.at2(n, 0);
    for (int64_t m = 1; m < M; ++m) mx = std::max(mx, z.at2(n, m));
    real se = 0;
    for (int64_t m = 0; m < M; ++m) se += std::exp(z.at2(n, m) - mx);
    const real lse = mx + std::log(se);
    for (int64_t m = 0; m < M; ++m) prob->at2(n, m) = std::exp(z.at2(n, m) - lse);
    loss += lse - z.at2(n, y);
  }
  loss /= static_cast<real>(N);
  std::vector<int> ylab(labels.begin(), labels.end());
  return t.apply("softmax_ce", {logits}, Tensor::scalar(loss),
                 [=, ylab = std::move(ylab)](Tape& tp, const Tensor& up) {
                   Tensor& dz = tp.grad_buf(logits);
                   const real s = up[0] / static_cast<real>(N);
                   for (int64_t n = 0; n < N; ++n)
                     for (int64_t m = 0; m < M; ++m)
                       dz.at2(n, m) +=
                           s * (prob->at2(n, m) -
                                (m == ylab[static_cast<size_t>(n)] ? real(1) : real(0)));
                 });
}

NodeId concat_channels(Tape& t, const std::vector<NodeId>& xs) {
  if (xs.empty()) fail("concat_channels: no inputs");
  const Tensor& first = t.value(xs[0]);
  Shape out_shape = first.shape();
  int64_t C = 0;
  for (NodeId id : xs) {
    const Tensor& v = t.value(id);
    if (v.rank() != first.rank())
      fail("concat_channels: rank mismatch %d vs %d", v.rank(), first.rank());
    for (int d = 0; d < v.rank(); ++d)
      if (d != 1 && v.dim(d) != first.dim(d))
        fail("concat_channels: extent mismatch at dim %d: %ld vs %ld", d, (long)v.dim(d),
             (long)first.dim(d));
    C += v.dim(1);
  }
  out_shape[1] = C;
  const int64_t N = first.dim(0);
  int64_t inner = 1;
  for (int d = 2; d < first.rank(); ++d) inner *= first.dim(d);

  Tensor y(out_shape);
  int64_t off = 0;
  for (NodeId id : xs) {
    const Tensor& v = t.value(id);
    const int64_t ci = v.dim(1);
    for (int64_t n = 0; n < N; ++n)
      std::copy(v.data() + n * ci * inner, v.data() + (n + 1) * ci * inner,
                y.data() + (n * C + off) * inner);
    off += ci;
  }
  std::vector<NodeId> ins = xs;
  return t.apply("concat", ins, std::move(y), [=](Tape& tp, const Tensor& up) {
    int64_t o = 0;
    for (NodeId id : ins) {
      const int64_t ci = tp.value(id).dim(1);
      Tensor& dx = tp.grad_buf(id);
      for (int64_t n = 0; n < N; ++n) {
        const real* src = up.data() + (n * C + o) * inner;
        real* dst = dx.data() + n * ci * inner;
        for (int64_t i = 0; i < ci * inner; ++i) dst[i] += src[i];
      }
      o += ci;
    }
  });
}

NodeId slice_channels(Tape& t, NodeId x, int64_t begin, int64_t end) {
  const Tensor& xv = t.value(x);
  if (xv.rank() < 2) fail("slice_channels: input must have a channel dim");
  const int64_t C = xv.dim(1);
  if (begin < 0 || end > C || begin >= end)
    fail("slice_channels: range [%ld,%ld) invalid for %ld channels", (long)begin, (long)end,
         (long)C);
  const int64_t N = xv.dim(0), ci = end - begin;
  int64_t inner = 1;
  for (int d = 2; d < xv.rank(); ++d) inner *= xv.dim(d);
  Shape out_shape = xv.shape();
  out_shape[1] = ci;
  Tensor y(out_shape);
  for (int64_t n = 0; n < N; ++n)
    std::copy(xv.data() + (n * C + begin) * inner, xv.data() + (n * C + end) * inner,
              y.data() + n * ci * inner);
  return t.apply("slice", {x}, std::move(y), [=](Tape& tp, const Tensor& up) {
    Tensor& dx = tp.grad_buf(x);
    for (int64_t n = 0; n < N; ++n) {
      const real* src = up.data() + n * ci * inner;
      real* dst = dx.data() + (n * C + begin) * inner;
      for (int64_t i = 0; i < ci * inner; ++i) dst[i] += src[i];
    }
  });
}

NodeId flatten(Tape& t, NodeId x) {
  const Tensor& xv = t.value(x);
  const int64_t N = xv.dim(0);
  Tensor y({N, xv.numel() / N}, std::vector<real>(xv.data(), xv.data() + xv.numel()));
  return t.apply("flatten", {x}, std::move(y), [=](Tape& tp, const Tensor& up) {
    Tensor& dx = tp.grad_buf(x);
    for (int64_t i = 0; i < up.numel(); ++i) dx[i] += up[i];
  });
}

NodeId add(Tape& t, NodeId a, NodeId b) {
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  if (!av.same_shape(bv))
    fail("add: shape %s vs %s", shape_str(av.shape()).c_str(), shape_str(bv.shape()).c_str());
  Tensor y(av.shape());
  for (int64_t i = 0; i < y.numel(); ++i) y[i] = av[i] + bv[i];
  return t.apply("add", {a, b}, std::move(y), [=](Tape& tp, const Tensor& up) {
    Tensor& da = tp.grad_buf(a);
    Tensor& db = tp.grad_buf(b);
    for (int64_t i = 0; i < up.numel(); ++i) {
      da[i] += up[i];
      db[i] += up[i];
    }
  });
}

NodeId mul(Tape& t, NodeId a, NodeId b) {
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  if (!av.same_shape(bv))
    fail("mul: shape %s vs %s", shape_str(av.shape()).c_str(), shape_str(bv.shape()).c_str());
  Tensor y(av.shape());
  for (int64_t i = 0; i < y.numel(); ++i) y[i] = av[i] * bv[i];
  return t.apply("mul", {a, b}, std::move(y), [=](Tape& tp, const Tensor& up) {
    const Tensor& ain = tp.value(a);
    const Tensor& bin = tp.value(b);
    Tensor& da = tp.grad_buf(a);
    Tensor& db = tp.grad_buf(b);
    for (int64_t i = 0; i < up.numel(); ++i) {
      da[i] += up[i] * bin[i];
      db[i] += up[i] * ain[i];
    }
  });
}

NodeId scale(Tape& t, NodeId x, real c) {
  const Tensor& xv = t.value(x);
  Tensor y(xv.shape());
  for (int64_t i = 0; i < y.numel(); ++i) y[i] = c * xv[i];
  return t.apply("scale", {x}, std::move(y), [=](Tape& tp, const Tensor& up) {
    Tensor& dx = tp.grad_buf(x);
    for (int64_t i = 0; i < up.numel(); ++i) dx[i] += c * up[i];
  });
}

NodeId sum(Tape& t, NodeId x) {
  const Tensor& xv = t.value(x);
  real s = 0;
  for (int64_t i = 0; i < xv.numel(); ++i) s += xv[i];
  return t.apply("sum", {x}, Tensor::scalar(s), [=](Tape& tp, const Tensor& up) {
    Tensor& dx = tp.grad_buf(x);
    for (int64_t i = 0; i < dx.numel(); ++i) dx[i] += up[0];
  });
}

}  // namespace ops
}  // namespace taper
