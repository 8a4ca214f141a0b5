#include <doctest.h>

#include <cmath>

#include "taper/graph.hpp"
#include "taper/ops.hpp"
#include "testutil.hpp"

using namespace taper;
using namespace taper::testutil;

namespace {

const char* kTwoConv = R"({
  "version": 1, "name": "two_conv", "input": [3, 8, 8], "init_seed": 3,
  "layers": [
    {"name": "conv1", "kind": "conv2d", "input": "input", "channels": 8, "kernel": 3, "pad": 1},
    {"name": "relu1", "kind": "relu", "input": "conv1"},
    {"name": "conv2", "kind": "conv2d", "input": "relu1", "channels": 4, "kernel": 3, "pad": 1},
    {"name": "flat", "kind": "flatten", "input": "conv2"},
    {"name": "fc", "kind": "dense", "input": "flat", "features": 5}
  ],
  "sites": [{"name": "s1", "tensor": "relu1"}]
})";

GraphSpec two_conv_spec() { return GraphSpec::from_json(kTwoConv); }

Tensor random_input(const Shape& img, int64_t n, uint64_t key) {
  Shape sh{n};
  for (int64_t d : img) sh.push_back(d);
  Tensor x(sh);
  fill_uniform(x, key);
  return x;
}

}  // namespace

TEST_CASE("graph build: validation failures") {
  SUBCASE("unknown input tensor") {
    GraphSpec s = two_conv_spec();
    s.layers[0].inputs = {"nope"};
    CHECK_THROWS_AS(InstrumentedGraph::build(s), Error);
  }
  SUBCASE("forward reference (cycle-equivalent) is rejected") {
    GraphSpec s = two_conv_spec();
    s.layers[0].inputs = {"conv2"};
    CHECK_THROWS_AS(InstrumentedGraph::build(s), Error);
  }
  SUBCASE("duplicate layer name") {
    GraphSpec s = two_conv_spec();
    s.layers[1].name = "conv1";
    CHECK_THROWS_AS(InstrumentedGraph::build(s), Error);
  }
  SUBCASE("site on unknown tensor") {
    GraphSpec s = two_conv_spec();
    s.sites[0].tensor = "missing";
    CHECK_THROWS_AS(InstrumentedGraph::build(s), Error);
  }
  SUBCASE("two sites on one tensor") {
    GraphSpec s = two_conv_spec();
    s.sites.push_back({"s2", "relu1"});
    try {
      InstrumentedGraph::build(s);
      FAIL("expected error");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("two sites") != std::string::npos);
    }
  }
  SUBCASE("gating an already gated channel dim") {
    GraphSpec s = two_conv_spec();
    // relu1 is gated; pooling it and gating again stacks two sites on the
    // same channels
    s.layers.insert(s.layers.begin() + 2,
                    LayerDesc{LayerKind::maxpool2d, "poolx", {"relu1"}, 0, 2, 2, 0, 1, 0, 0, 0});
    s.layers[3].inputs = {"poolx"};
    s.sites.push_back({"s2", "poolx"});
    CHECK_THROWS_AS(InstrumentedGraph::build(s), Error);
  }
  SUBCASE("site on the network input is rejected") {
    GraphSpec s = two_conv_spec();
    s.sites[0].tensor = "input";
    CHECK_THROWS_AS(InstrumentedGraph::build(s), Error);
  }
}

TEST_CASE("graph: no sites behaves identically to the uninstrumented net") {
  GraphSpec gated = two_conv_spec();
  GraphSpec plain = gated;
  plain.sites.clear();
  InstrumentedGraph a = InstrumentedGraph::build(gated);
  InstrumentedGraph b = InstrumentedGraph::build(plain);
  Tensor x = random_input({3, 8, 8}, 2, 5);

  // identical init (same seed), gates wide open at rho_max: identical outputs
  Tensor ya = a.forward_eval(x);
  Tensor yb = b.forward_eval(x);
  for (int64_t i = 0; i < ya.numel(); ++i) CHECK(ya[i] == yb[i]);
}

TEST_CASE("graph: open gates with eps=0 give bitwise-identical training loss") {
  GraphSpec spec = two_conv_spec();
  InstrumentedGraph g = InstrumentedGraph::build(spec);
  GraphSpec plain_spec = spec;
  plain_spec.sites.clear();
  InstrumentedGraph plain = InstrumentedGraph::build(plain_spec);

  GateConfig cfg;
  cfg.epsilon = 0;
  Tensor x = random_input({3, 8, 8}, 3, 17);
  std::vector<int> labels{0, 3, 1};

  Tape t1, t2;
  NodeId l1 = ops::softmax_cross_entropy(t1, g.forward_train(t1, x, cfg, 11, 0), labels);
  NodeId l2 = ops::softmax_cross_entropy(t2, plain.forward_train(t2, x, cfg, 11, 0), labels);
  CHECK(t1.value(l1)[0] == t2.value(l2)[0]);
}

TEST_CASE("graph: fixed seed gives bitwise-identical losses across reruns") {
  GraphSpec spec = two_conv_spec();
  InstrumentedGraph g = InstrumentedGraph::build(spec);
  g.sites()[0].rho.assign(8, real(0.3));  // active band, stochastic gates
  GateConfig cfg;
  Tensor x = random_input({3, 8, 8}, 4, 23);
  std::vector<int> labels{1, 2, 0, 4};

  auto run_once = [&] {
    Tape t;
    NodeId loss = ops::softmax_cross_entropy(t, g.forward_train(t, x, cfg, 7, 42), labels);
    return t.value(loss)[0];
  };
  const real a = run_once();
  const real b = run_once();
  CHECK(a == b);
}

TEST_CASE("graph: eps=0 with mixed rho equals the zeroed-weights oracle") {
  GraphSpec spec = two_conv_spec();
  InstrumentedGraph g = InstrumentedGraph::build(spec);
  auto& site = g.sites()[0];
  for (int64_t c = 0; c < 8; ++c) site.rho[size_t(c)] = c % 2 ? real(12) : real(-12);

  // independent oracle: no gates; instead zero conv2's weight columns for the
  // pruned input channels (a hard-masked activation contributes exactly 0)
  GraphSpec ospec = spec;
  ospec.sites.clear();
  InstrumentedGraph oracle = InstrumentedGraph::build(ospec);
  Parameter* w2 = oracle.parameter("conv2/w");
  for (int64_t k = 0; k < 4; ++k)
    for (int64_t c = 0; c < 8; ++c)
      if (c % 2 == 0)
        for (int64_t i = 0; i < 9; ++i) w2->value[(k * 8 + c) * 9 + i] = 0;

  GateConfig cfg;
  cfg.epsilon = 0;
  Tensor x = random_input({3, 8, 8}, 4, 31);
  std::vector<int> labels{0, 1, 2, 3};
  Tape t1, t2;
  NodeId l1 = ops::softmax_cross_entropy(t1, g.forward_train(t1, x, cfg, 5, 1), labels);
  NodeId l2 = ops::softmax_cross_entropy(t2, oracle.forward_train(t2, x, cfg, 5, 1), labels);
  // gate draws with |rho|=12 come out 0/1 for this seed; difference only via
  // the 6e-6-probability band, absent here
  CHECK(rel_err(t1.value(l1)[0], t2.value(l2)[0]) < 1e-12);
}

TEST_CASE("graph: instrumented gradients equal uninstrumented ones at open gates") {
  GraphSpec spec = two_conv_spec();
  InstrumentedGraph g = InstrumentedGraph::build(spec);
  GraphSpec pspec = spec;
  pspec.sites.clear();
  InstrumentedGraph plain = InstrumentedGraph::build(pspec);

  GateConfig cfg;
  cfg.epsilon = 0;
  Tensor x = random_input({3, 8, 8}, 3, 37);
  std::vector<int> labels{2, 0, 4};

  Tape t1, t2;
  t1.backward(ops::softmax_cross_entropy(t1, g.forward_train(t1, x, cfg, 13, 0), labels));
  t2.backward(ops::softmax_cross_entropy(t2, plain.forward_train(t2, x, cfg, 13, 0), labels));
  for (Parameter* p : g.parameters()) {
    Parameter* q = plain.parameter(p->name);
    REQUIRE(q != nullptr);
    for (int64_t i = 0; i < p->grad.numel(); ++i)
      CHECK(std::abs(double(p->grad[i]) - q->grad[i]) <= 1e-10);
  }
}

TEST_CASE("graph: forward_eval equals forward_train when masks agree with draws") {
  GraphSpec spec = two_conv_spec();
  InstrumentedGraph g = InstrumentedGraph::build(spec);
  auto& site = g.sites()[0];
  for (int64_t c = 0; c < 8; ++c) site.rho[size_t(c)] = c % 3 ? real(12) : real(-12);
  GateConfig cfg;
  cfg.epsilon = 0;
  Tensor x = random_input({3, 8, 8}, 2, 41);

  Tape t;
  NodeId out = g.forward_train(t, x, cfg, 3, 0);  // saturated rho: draws match sign(rho)
  Tensor ev = g.forward_eval(x);
  for (int64_t i = 0; i < ev.numel(); ++i)
    CHECK(t.value(out)[i] == doctest::Approx(ev[i]).epsilon(1e-12));
}

TEST_CASE("graph: grouped conv split matches the naive grouped oracle") {
  const char* kGrouped = R"({
    "version": 1, "name": "grp", "input": [4, 6, 6], "init_seed": 5,
    "layers": [
      {"name": "g", "kind": "conv2d", "input": "input", "channels": 6, "kernel": 3, "pad": 1, "groups": 2},
      {"name": "flat", "kind": "flatten", "input": "g"},
      {"name": "fc", "kind": "dense", "input": "flat", "features": 3}
    ],
    "sites": []
  })";
  GraphSpec spec = GraphSpec::from_json(kGrouped);
  InstrumentedGraph g = InstrumentedGraph::build(spec);

  // grouped weights [K=6, C/g=2, 3, 3]; split convs own rows [0..3) and [3..6)
  Tensor gw({6, 2, 3, 3}), gb({6});
  fill_uniform(gw, 51);
  fill_uniform(gb, 52);
  for (int part = 0; part < 2; ++part) {
    Parameter* w = g.parameter("g/g" + std::to_string(part) + "/w");
    Parameter* b = g.parameter("g/g" + std::to_string(part) + "/b");
    REQUIRE(w != nullptr);
    REQUIRE(w->value.shape() == Shape{3, 2, 3, 3});
    for (int64_t i = 0; i < w->value.numel(); ++i) w->value[i] = gw[part * w->value.numel() + i];
    for (int64_t i = 0; i < 3; ++i) b->value[i] = gb[part * 3 + i];
  }

  Tensor x = random_input({4, 6, 6}, 2, 53);
  Tensor got = g.forward_eval(x);  // logits; compare the conv stage via a probe
  // probe the concat output directly through a second graph that ends at "g"
  GraphSpec probe = spec;
  probe.layers.resize(1);
  InstrumentedGraph pg = InstrumentedGraph::build(probe);
  for (int part = 0; part < 2; ++part) {
    Parameter* w = pg.parameter("g/g" + std::to_string(part) + "/w");
    Parameter* b = pg.parameter("g/g" + std::to_string(part) + "/b");
    for (int64_t i = 0; i < w->value.numel(); ++i) w->value[i] = gw[part * w->value.numel() + i];
    for (int64_t i = 0; i < 3; ++i) b->value[i] = gb[part * 3 + i];
  }
  Tensor split_out = pg.forward_eval(x);
  Tensor ref = naive_grouped_conv2d(x, gw, gb, 1, 1, 2);
  REQUIRE(split_out.shape() == ref.shape());
  for (int64_t i = 0; i < ref.numel(); ++i) CHECK(rel_err(split_out[i], ref[i]) < 1e-9);
  (void)got;
}

TEST_CASE("graph spec: JSON round-trip preserves structure") {
  GraphSpec a = two_conv_spec();
  GraphSpec b = GraphSpec::from_json(a.to_json());
  CHECK(a.name == b.name);
  CHECK(a.input_shape == b.input_shape);
  REQUIRE(a.layers.size() == b.layers.size());
  for (size_t i = 0; i < a.layers.size(); ++i) {
    CHECK(a.layers[i].name == b.layers[i].name);
    CHECK(a.layers[i].kind == b.layers[i].kind);
    CHECK(a.layers[i].inputs == b.layers[i].inputs);
  }
  CHECK(a.sites.size() == b.sites.size());
}
