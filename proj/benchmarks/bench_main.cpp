#include <benchmark/benchmark.h>

#include "taper/gate.hpp"
#include "taper/ops.hpp"
#include "taper/resource.hpp"
#include "taper/rng.hpp"

using namespace taper;

namespace {

Tensor random_tensor(Shape shape, uint64_t key) {
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i)
    t[i] = static_cast<real>(rng_uniform(key, RngStream::test, static_cast<uint64_t>(i)) - 0.5);
  return t;
}

void BM_conv2d_forward(benchmark::State& state) {
  const int64_t c = state.range(0);
  Tensor x = random_tensor({16, c, 12, 12}, 1);
  Tensor w = random_tensor({c, c, 3, 3}, 2);
  Tensor b = random_tensor({c}, 3);
  for (auto _ : state) {
    Tensor y = ops::conv2d_value(x, w, b, 1, 1);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * 16 * c * c * 9 * 144);
}
BENCHMARK(BM_conv2d_forward)->Arg(32)->Arg(64);

void BM_conv2d_train_step(benchmark::State& state) {
  const int64_t c = state.range(0);
  Tensor x = random_tensor({16, c, 12, 12}, 1);
  Parameter w("w", random_tensor({c, c, 3, 3}, 2));
  Parameter b("b", random_tensor({c}, 3));
  for (auto _ : state) {
    Tape t;
    w.zero_grad();
    b.zero_grad();
    NodeId y = ops::conv2d(t, t.input(x), t.param(&w), t.param(&b), 1, 1);
    NodeId loss = ops::sum(t, y);
    t.backward(loss);
    benchmark::DoNotOptimize(w.grad.data());
  }
}
BENCHMARK(BM_conv2d_train_step)->Arg(32)->Arg(64);

void BM_gate_forward(benchmark::State& state) {
  Tensor x = random_tensor({16, 64, 6, 6}, 4);
  PruningSiteState site("s", 64, 3.0);
  GateConfig cfg;
  uint64_t iter = 0;
  for (auto _ : state) {
    Tensor y = gate_forward_value(x, site, cfg, {1, iter++, 0}, nullptr);
    benchmark::DoNotOptimize(y.data());
  }
}
BENCHMARK(BM_gate_forward);

void BM_eval_grad_f(benchmark::State& state) {
  ResourcePolynomial poly;
  poly.num_sites = 8;
  for (int a = 0; a < 8; ++a)
    for (int b = a; b < 8; ++b) poly.quad.push_back({a, b, real(1e5)});
  std::vector<real> w(8, real(0.7));
  for (auto _ : state) {
    benchmark::DoNotOptimize(eval_f(poly, w));
    auto g = grad_f_w(poly, w);
    benchmark::DoNotOptimize(g.data());
  }
}
BENCHMARK(BM_eval_grad_f);

}  // namespace

BENCHMARK_MAIN();
