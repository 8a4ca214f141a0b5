#include <doctest.h>

#include <cmath>

#include "taper/extract.hpp"
#include "taper/resource.hpp"
#include "testutil.hpp"

using namespace taper;
using namespace taper::testutil;

namespace {

Tensor random_input(const Shape& img, int64_t n, uint64_t key) {
  Shape sh{n};
  for (int64_t d : img) sh.push_back(d);
  Tensor x(sh);
  fill_uniform(x, key);
  return x;
}

double max_rel_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.shape() == b.shape());
  double m = 0;
  for (int64_t i = 0; i < a.numel(); ++i) m = std::max(m, rel_err(a[i], b[i]));
  return m;
}

}  // namespace

TEST_CASE("extract: no pruning is the identity") {
  GraphSpec spec = GraphSpec::load(config_path("toy3.json"));
  InstrumentedGraph g = InstrumentedGraph::build(spec);
  PrunedConfiguration pc = extract(g);
  CHECK(pc.mac_count == spec_mac_count(spec));
  InstrumentedGraph dense = InstrumentedGraph::build(pc.spec, pc.weights.as_map());
  Tensor x = random_input(spec.input_shape, 3, 61);
  CHECK(max_rel_diff(g.forward_eval(x), dense.forward_eval(x)) < 1e-12);
}

TEST_CASE("extract: one pruned channel slices the consumer and preserves outputs") {
  const char* kChain = R"({
    "version": 1, "name": "chain", "input": [2, 6, 6], "init_seed": 9,
    "layers": [
      {"name": "conv1", "kind": "conv2d", "input": "input", "channels": 4, "kernel": 3, "pad": 1},
      {"name": "relu1", "kind": "relu", "input": "conv1"},
      {"name": "conv2", "kind": "conv2d", "input": "relu1", "channels": 3, "kernel": 3, "pad": 1},
      {"name": "flat", "kind": "flatten", "input": "conv2"},
      {"name": "fc", "kind": "dense", "input": "flat", "features": 2}
    ],
    "sites": [{"name": "s", "tensor": "relu1"}]
  })";
  InstrumentedGraph g = InstrumentedGraph::build(GraphSpec::from_json(kChain));
  g.sites()[0].rho[2] = real(-4);  // prune channel 2 of 4

  PrunedConfiguration pc = extract(g);
  REQUIRE(pc.spec.layers[0].channels == 3);  // conv1 lost an output channel
  const Tensor* w2 = pc.weights.find("conv2/w");
  REQUIRE(w2 != nullptr);
  CHECK(w2->shape() == Shape{3, 3, 3, 3});  // conv2 lost the input slice

  InstrumentedGraph dense = InstrumentedGraph::build(pc.spec, pc.weights.as_map());
  Tensor x = random_input({2, 6, 6}, 4, 62);
  CHECK(max_rel_diff(g.forward_eval(x), dense.forward_eval(x)) < 1e-6);
}

TEST_CASE("extract: equivalence and MAC cross-check on random rho (toy net)") {
  GraphSpec spec = GraphSpec::load(config_path("toy3.json"));
  for (uint64_t inst = 0; inst < 5; ++inst) {
    InstrumentedGraph g = InstrumentedGraph::build(spec);
    std::vector<real> w;
    for (size_t si = 0; si < g.sites().size(); ++si) {
      auto& site = g.sites()[si];
      int64_t kept = 0;
      for (int64_t c = 0; c < site.channels; ++c) {
        const double u = rng_uniform(inst + 70, RngStream::test, si, uint64_t(c));
        site.rho[size_t(c)] = real(8 * (u - 0.35));  // ~65% kept, varied magnitudes
        kept += site.rho[size_t(c)] > 0;
      }
      if (kept == 0) site.rho[0] = real(1);
      w.push_back(site.fraction());
    }
    PrunedConfiguration pc = extract(g);
    InstrumentedGraph dense = InstrumentedGraph::build(pc.spec, pc.weights.as_map());
    Tensor x = random_input(spec.input_shape, 4, 63 + inst);
    CHECK(max_rel_diff(g.forward_eval(x), dense.forward_eval(x)) < 1e-6);
    CHECK(pc.mac_count == spec_mac_count(pc.spec));
  }
}

TEST_CASE("extract: grouped-split net with slices and concat") {
  const char* kGrp = R"({
    "version": 1, "name": "grp", "input": [2, 8, 8], "init_seed": 5,
    "layers": [
      {"name": "conv1", "kind": "conv2d", "input": "input", "channels": 8, "kernel": 3, "pad": 1},
      {"name": "relu1", "kind": "relu", "input": "conv1"},
      {"name": "conv2", "kind": "conv2d", "input": "relu1", "channels": 6, "kernel": 3, "pad": 1, "groups": 2},
      {"name": "relu2", "kind": "relu", "input": "conv2"},
      {"name": "flat", "kind": "flatten", "input": "relu2"},
      {"name": "fc", "kind": "dense", "input": "flat", "features": 4}
    ],
    "sites": [
      {"name": "sa", "tensor": "conv2/in0"},
      {"name": "sb", "tensor": "conv2/in1"},
      {"name": "sc", "tensor": "relu2"}
    ]
  })";
  InstrumentedGraph g = InstrumentedGraph::build(GraphSpec::from_json(kGrp));
  g.sites()[0].rho = {real(3), real(-3), real(3), real(3)};    // sa: drop 1 of 4
  g.sites()[1].rho = {real(-3), real(3), real(3), real(-3)};   // sb: drop 2 of 4
  // sc spans the concat of both conv halves; drop one channel in each half so
  // the per-half fraction equals the site fraction (the polynomial attributes
  // split output dims proportionally)
  g.sites()[2].rho = {real(3), real(3), real(-3), real(3), real(3), real(-3)};

  PrunedConfiguration pc = extract(g);
  // slices partition conv1's 8 outputs into [0,4) and [4,8)
  REQUIRE(pc.spec.layers[0].channels == 3 + 2);
  InstrumentedGraph dense = InstrumentedGraph::build(pc.spec, pc.weights.as_map());
  Tensor x = random_input({2, 8, 8}, 3, 64);
  CHECK(max_rel_diff(g.forward_eval(x), dense.forward_eval(x)) < 1e-6);
  CHECK(pc.mac_count == spec_mac_count(pc.spec));

  auto poly = build_polynomial(g);
  std::vector<real> w;
  for (auto& s : g.sites()) w.push_back(real(s.kept_count()) / real(s.channels));
  CHECK(std::abs(eval_f(poly, w) - real(pc.mac_count)) < 1e-6);
}

TEST_CASE("extract: a site keeping zero channels fails loudly") {
  GraphSpec spec = GraphSpec::load(config_path("toy3.json"));
  InstrumentedGraph g = InstrumentedGraph::build(spec);
  g.sites()[1].rho.assign(size_t(g.sites()[1].channels), real(-5));
  try {
    extract(g);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("s2") != std::string::npos);
  }
}

TEST_CASE("extract: dead concat branch is dropped when allowed") {
  const char* kBranch = R"({
    "version": 1, "name": "branch", "input": [2, 6, 6], "init_seed": 8,
    "layers": [
      {"name": "convA", "kind": "conv2d", "input": "input", "channels": 3, "kernel": 3, "pad": 1},
      {"name": "convB", "kind": "conv2d", "input": "input", "channels": 2, "kernel": 3, "pad": 1},
      {"name": "cat", "kind": "concat", "inputs": ["convA", "convB"]},
      {"name": "relu", "kind": "relu", "input": "cat"},
      {"name": "flat", "kind": "flatten", "input": "relu"},
      {"name": "fc", "kind": "dense", "input": "flat", "features": 2}
    ],
    "sites": [{"name": "sA", "tensor": "convA"}, {"name": "sB", "tensor": "convB"}]
  })";
  InstrumentedGraph g = InstrumentedGraph::build(GraphSpec::from_json(kBranch));
  g.sites()[1].rho.assign(2, real(-5));  // branch B fully pruned

  CHECK_THROWS_AS(extract(g, false), Error);

  PrunedConfiguration pc = extract(g, true);
  bool has_convB = false;
  for (const auto& l : pc.spec.layers) has_convB |= l.name == "convB";
  CHECK(!has_convB);
  InstrumentedGraph dense = InstrumentedGraph::build(pc.spec, pc.weights.as_map());
  Tensor x = random_input({2, 6, 6}, 3, 65);
  CHECK(max_rel_diff(g.forward_eval(x), dense.forward_eval(x)) < 1e-6);
}
