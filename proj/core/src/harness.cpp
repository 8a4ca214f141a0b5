#include "taper/harness.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

#include "taper/container.hpp"
#include "taper/rng.hpp"

namespace taper {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

ScheduleKind schedule_from_name(const std::string& s) {
  if (s == "adaptive") return ScheduleKind::adaptive;
  if (s == "pure_feedback") return ScheduleKind::pure_feedback;
  if (s == "exponential") return ScheduleKind::exponential;
  fail("unknown schedule kind '%s'", s.c_str());
}

const char* schedule_name(ScheduleKind k) {
  switch (k) {
    case ScheduleKind::adaptive: return "adaptive";
    case ScheduleKind::pure_feedback: return "pure_feedback";
    case ScheduleKind::exponential: return "exponential";
  }
  return "?";
}

std::string resolve_path(const std::string& base_dir, const std::string& p) {
  if (p.empty() || fs::path(p).is_absolute() || base_dir.empty()) return p;
  return (fs::path(base_dir) / p).string();
}

}  // namespace

RunConfig RunConfig::from_json(const std::string& text, const std::string& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail("run config is not valid JSON: %s", e.what());
  }
  RunConfig c;
  if (j.value("version", 1) != 1) fail("unsupported run config version");

  if (j.contains("graph_inline"))
    c.graph = GraphSpec::from_json(j.at("graph_inline").dump());
  else
    c.graph = GraphSpec::load(resolve_path(base_dir, j.at("graph").get<std::string>()));

  if (j.contains("dataset")) {
    const json& d = j.at("dataset");
    c.dataset.kind = d.value("kind", "synthetic");
    c.dataset.classes = d.value("classes", 10);
    if (d.contains("image")) {
      c.dataset.image_shape.clear();
      for (auto e : d.at("image")) c.dataset.image_shape.push_back(e.get<int64_t>());
    }
    c.dataset.train_n = d.value("train_n", int64_t(8192));
    c.dataset.eval_n = d.value("eval_n", int64_t(2048));
    c.dataset.seed = d.value("seed", uint64_t(1));
    c.dataset.noise = d.value("noise", real(0.45));
    c.dataset.frequency = d.value("frequency", real(2.5));
    c.dataset.train_dir = resolve_path(base_dir, d.value("train_dir", std::string()));
    c.dataset.eval_dir = resolve_path(base_dir, d.value("eval_dir", std::string()));
  }

  c.seed = j.value("seed", uint64_t(1));
  c.batch_size = j.value("batch_size", int64_t(16));

  if (j.contains("weight_solver")) {
    const json& w = j.at("weight_solver");
    const std::string kind = w.value("kind", "adam");
    if (kind == "sgd") c.weight_solver.kind = SolverKind::sgd;
    else if (kind == "adam") c.weight_solver.kind = SolverKind::adam;
    else fail("unknown weight solver '%s'", kind.c_str());
    c.weight_solver.lr = w.value("lr", real(1e-3));
    c.weight_solver.momentum = w.value("momentum", real(0.9));
    c.weight_solver.beta1 = w.value("beta1", real(0.9));
    c.weight_solver.beta2 = w.value("beta2", real(0.999));
    c.weight_solver.adam_eps = w.value("eps", real(1e-8));
  }

  if (j.contains("gate")) {
    const json& g = j.at("gate");
    c.gate.epsilon = g.value("epsilon", real(0.5));
    c.gate.kappa = g.value("kappa", real(0.04));
    c.gate.rho_max = g.value("rho_max", real(12));
  }

  if (j.contains("rho_solver")) {
    const json& r = j.at("rho_solver");
    c.rho.alpha_rho = r.value("alpha_rho", real(0.03));
    c.rho.delta = r.value("delta", real(0.005));
    c.rho.rho_max = r.value("rho_max", real(12));
    c.rho.clip_bound = r.value("clip", real(3));
    c.rho.d_floor = r.value("d_floor", real(1e-12));
  }

  if (j.contains("controller")) {
    const json& k = j.at("controller");
    c.controller.mu = k.value("mu", real(1e-4));
    c.controller.beta = k.value("beta", real(0.05));
    c.controller.r = k.value("r", real(30000));
    c.controller.f0 = k.value("f0", real(0));
    c.controller.lambda_guard = k.value("lambda_guard", real(1e-6));
    c.controller.schedule = schedule_from_name(k.value("schedule", "adaptive"));
  }

  for (const json& p : j.value("phases", json::array())) {
    PhaseConfig ph;
    ph.name = p.value("name", "phase" + std::to_string(c.phases.size()));
    ph.stop_iters = p.value("stop_iters", int64_t(-1));
    ph.stop_f = p.value("stop_f", real(-1));
    ph.stop_f_fraction = p.value("stop_f_fraction", real(-1));
    if (p.contains("f0")) ph.f0 = p.at("f0").get<real>();
    if (p.contains("f0_fraction")) ph.f0_fraction = p.at("f0_fraction").get<real>();
    ph.f0_freeze = p.value("f0_freeze", false);
    if (p.contains("mu")) ph.mu = p.at("mu").get<real>();
    if (p.contains("lr")) ph.lr = p.at("lr").get<real>();
    if (p.contains("schedule")) ph.schedule = schedule_from_name(p.at("schedule").get<std::string>());
    c.phases.push_back(std::move(ph));
  }

  c.eval_interval = j.value("eval_interval", int64_t(200));
  c.eval_f_step_fraction = j.value("eval_f_step_fraction", real(0));
  c.eval_batch = j.value("eval_batch", int64_t(256));
  c.snapshot_every_evals = j.value("snapshot_every_evals", int64_t(0));
  c.max_iterations = j.value("max_iterations", int64_t(1000000));
  c.extract_allow_dead_branches = j.value("extract_allow_dead_branches", false);
  c.extract_at_end = j.value("extract_at_end", true);
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open run config '%s'", path.c_str());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str(), fs::path(path).parent_path().string());
}

std::string RunConfig::to_json() const {
  json j;
  j["version"] = 1;
  j["graph_inline"] = json::parse(graph.to_json());
  j["dataset"] = {{"kind", dataset.kind},         {"classes", dataset.classes},
                  {"image", dataset.image_shape}, {"train_n", dataset.train_n},
                  {"eval_n", dataset.eval_n},     {"seed", dataset.seed},
                  {"noise", dataset.noise},       {"frequency", dataset.frequency}};
  if (!dataset.train_dir.empty()) j["dataset"]["train_dir"] = dataset.train_dir;
  if (!dataset.eval_dir.empty()) j["dataset"]["eval_dir"] = dataset.eval_dir;
  j["seed"] = seed;
  j["batch_size"] = batch_size;
  j["weight_solver"] = {{"kind", weight_solver.kind == SolverKind::sgd ? "sgd" : "adam"},
                        {"lr", weight_solver.lr},
                        {"momentum", weight_solver.momentum},
                        {"beta1", weight_solver.beta1},
                        {"beta2", weight_solver.beta2},
                        {"eps", weight_solver.adam_eps}};
  j["gate"] = {{"epsilon", gate.epsilon}, {"kappa", gate.kappa}, {"rho_max", gate.rho_max}};
  j["rho_solver"] = {{"alpha_rho", rho.alpha_rho},
                     {"delta", rho.delta},
                     {"rho_max", rho.rho_max},
                     {"clip", rho.clip_bound},
                     {"d_floor", rho.d_floor}};
  j["controller"] = {{"mu", controller.mu},
                     {"beta", controller.beta},
                     {"r", controller.r},
                     {"f0", controller.f0},
                     {"lambda_guard", controller.lambda_guard},
                     {"schedule", schedule_name(controller.schedule)}};
  j["phases"] = json::array();
  for (const auto& p : phases) {
    json jp;
    jp["name"] = p.name;
    if (p.stop_iters >= 0) jp["stop_iters"] = p.stop_iters;
    if (p.stop_f >= 0) jp["stop_f"] = p.stop_f;
    if (p.stop_f_fraction >= 0) jp["stop_f_fraction"] = p.stop_f_fraction;
    if (p.f0) jp["f0"] = *p.f0;
    if (p.f0_fraction) jp["f0_fraction"] = *p.f0_fraction;
    if (p.f0_freeze) jp["f0_freeze"] = true;
    if (p.mu) jp["mu"] = *p.mu;
    if (p.lr) jp["lr"] = *p.lr;
    if (p.schedule) jp["schedule"] = schedule_name(*p.schedule);
    j["phases"].push_back(jp);
  }
  j["eval_interval"] = eval_interval;
  j["eval_f_step_fraction"] = eval_f_step_fraction;
  j["eval_batch"] = eval_batch;
  j["snapshot_every_evals"] = snapshot_every_evals;
  j["max_iterations"] = max_iterations;
  j["extract_allow_dead_branches"] = extract_allow_dead_branches;
  j["extract_at_end"] = extract_at_end;
  return j.dump(2) + "\n";
}

void RunConfig::validate() const {
  if (eval_interval <= 0) fail("eval_interval must be positive");
  if (batch_size <= 0) fail("batch_size must be positive");
  if (eval_batch <= 0) fail("eval_batch must be positive");
  gate.validate();
  rho.validate();
  controller.validate();
  for (const auto& p : phases) {
    int conds = (p.stop_iters >= 0) + (p.stop_f >= 0) + (p.stop_f_fraction >= 0);
    if (conds != 1)
      fail("phase %s must have exactly one stop condition (stop_iters | stop_f | "
           "stop_f_fraction)",
           p.name.c_str());
  }
}

namespace {

// All mutable state of a run, bundled for snapshotting.
struct Engine {
  RunConfig cfg;
  Dataset dataset;
  InstrumentedGraph graph;
  ResourcePolynomial poly;
  WeightSolver solver;
  ControllerState ctrl;
  ControllerConfig ctrl_eff;  // base + phase overrides
  real f_initial = 0;
  int64_t iteration = 0;
  size_t phase_index = 0;     // currently active phase (may be == phases.size())
  int64_t phase_start = 0;
  bool phase_entered = false; // overrides of phase_index applied?
  real f_last_eval = 0;
  real loss_accum = 0;
  int64_t loss_count = 0;
};

real evaluate_accuracy(const Engine& e) {
  const Dataset& ds = e.dataset;
  const int64_t n = ds.size(Dataset::Split::eval);
  int64_t correct = 0;
  for (int64_t at = 0; at < n; at += e.cfg.eval_batch) {
    const int64_t b = std::min(e.cfg.eval_batch, n - at);
    std::vector<int64_t> idx(static_cast<size_t>(b));
    for (int64_t i = 0; i < b; ++i) idx[static_cast<size_t>(i)] = at + i;
    Tensor x;
    std::vector<int> labels;
    ds.batch(Dataset::Split::eval, idx, &x, &labels);
    Tensor logits = e.graph.forward_eval(x);
    const int64_t M = logits.dim(1);
    for (int64_t i = 0; i < b; ++i) {
      int64_t arg = 0;
      for (int64_t m = 1; m < M; ++m)
        if (logits.at2(i, m) > logits.at2(i, arg)) arg = m;
      correct += arg == labels[static_cast<size_t>(i)];
    }
  }
  return static_cast<real>(correct) / static_cast<real>(n);
}

void apply_phase_entry(Engine& e) {
  if (e.phase_index >= e.cfg.phases.size() || e.phase_entered) return;
  const PhaseConfig& p = e.cfg.phases[e.phase_index];
  e.ctrl_eff = e.cfg.controller;
  if (p.schedule) e.ctrl_eff.schedule = *p.schedule;
  if (p.mu) e.ctrl_eff.mu = *p.mu;
  if (p.f0_freeze)
    e.ctrl_eff.f0 = e.ctrl.f_sched;
  else if (p.f0_fraction)
    e.ctrl_eff.f0 = *p.f0_fraction * e.f_initial;
  else if (p.f0)
    e.ctrl_eff.f0 = *p.f0;
  e.solver.set_lr(p.lr ? *p.lr : e.cfg.weight_solver.lr);
  e.phase_entered = true;
  std::cout << "[taper] iter " << e.iteration << ": phase '" << p.name << "' (schedule "
            << schedule_name(e.ctrl_eff.schedule) << ", mu " << real_to_string(e.ctrl_eff.mu)
            << ", F_0 " << real_to_string(e.ctrl_eff.f0) << ", lr "
            << real_to_string(e.solver.lr()) << ")\n";
}

bool phase_done(const Engine& e, real f_current) {
  const PhaseConfig& p = e.cfg.phases[e.phase_index];
  if (p.stop_iters >= 0) return e.iteration - e.phase_start >= p.stop_iters;
  const real target = p.stop_f >= 0 ? p.stop_f : p.stop_f_fraction * e.f_initial;
  return f_current <= target;
}

void write_snapshot(Engine& e, const std::string& path) {
  Container box;
  for (Parameter* p : e.graph.parameters()) box.add("param/" + p->name, p->value);
  for (const auto& s : e.graph.sites()) {
    box.add("site/" + s.name + "/rho", Tensor({static_cast<int64_t>(s.rho.size())},
                                              std::vector<real>(s.rho.begin(), s.rho.end())));
    box.add("site/" + s.name + "/d", Tensor({static_cast<int64_t>(s.d.size())},
                                            std::vector<real>(s.d.begin(), s.d.end())));
  }
  for (auto st : e.solver.state_tensors()) box.add(st.name, *st.tensor);
  box.add("state/scalars",
          Tensor({8}, {e.ctrl.lambda_f, e.ctrl.f_sched, e.f_initial, e.f_last_eval, e.loss_accum,
                       e.solver.lr(), e.ctrl_eff.mu, e.ctrl_eff.f0}));
  json meta;
  meta["schema"] = 1;
  meta["iteration"] = e.iteration;
  meta["phase_index"] = e.phase_index;
  meta["phase_start"] = e.phase_start;
  meta["solver_steps"] = e.solver.steps_taken();
  meta["loss_count"] = e.loss_count;
  meta["ctrl_schedule"] = schedule_name(e.ctrl_eff.schedule);
  meta["run_config"] = json::parse(e.cfg.to_json());
  box.meta_json = meta.dump();
  write_container(path, box);
}

Engine make_engine(const RunConfig& cfg) {
  Engine e{cfg, Dataset::make(cfg.dataset), InstrumentedGraph::build(cfg.graph),
           {},  {},                         {},
           cfg.controller};
  e.poly = build_polynomial(e.graph);
  e.solver = WeightSolver(cfg.weight_solver, e.graph.parameters());
  e.ctrl = init_schedule(e.poly, e.graph.sites());
  e.f_initial = e.ctrl.f_sched;
  e.f_last_eval = e.f_initial;
  return e;
}

Engine restore_engine(const std::string& snapshot_path) {
  Container box = read_container(snapshot_path);
  json meta = json::parse(box.meta_json);
  if (meta.value("schema", 0) != 1) fail("snapshot '%s': unsupported schema", snapshot_path.c_str());
  RunConfig cfg = RunConfig::from_json(meta.at("run_config").dump(), "");

  Engine e = make_engine(cfg);
  for (Parameter* p : e.graph.parameters()) {
    const Tensor* t = box.find("param/" + p->name);
    if (!t) fail("snapshot missing parameter '%s'", p->name.c_str());
    if (!t->same_shape(p->value)) fail("snapshot parameter '%s': shape mismatch", p->name.c_str());
    p->value = *t;
  }
  for (auto& s : e.graph.sites()) {
    const Tensor* r = box.find("site/" + s.name + "/rho");
    const Tensor* d = box.find("site/" + s.name + "/d");
    if (!r || !d) fail("snapshot missing site state for '%s'", s.name.c_str());
    if (r->numel() != s.channels || d->numel() != s.channels)
      fail("snapshot site '%s': channel count mismatch", s.name.c_str());
    s.rho.assign(r->data(), r->data() + r->numel());
    s.d.assign(d->data(), d->data() + d->numel());
  }
  for (auto st : e.solver.state_tensors()) {
    const Tensor* t = box.find(st.name);
    if (!t) fail("snapshot missing solver state '%s'", st.name.c_str());
    *st.tensor = *t;
  }
  const Tensor* sc = box.find("state/scalars");
  if (!sc || sc->numel() != 8) fail("snapshot missing state/scalars");
  e.ctrl.lambda_f = (*sc)[0];
  e.ctrl.f_sched = (*sc)[1];
  e.f_initial = (*sc)[2];
  e.f_last_eval = (*sc)[3];
  e.loss_accum = (*sc)[4];
  e.solver.set_lr((*sc)[5]);
  e.ctrl_eff = cfg.controller;
  e.ctrl_eff.mu = (*sc)[6];
  e.ctrl_eff.f0 = (*sc)[7];
  e.ctrl_eff.schedule = schedule_from_name(meta.at("ctrl_schedule").get<std::string>());
  e.iteration = meta.at("iteration").get<int64_t>();
  e.ctrl.iteration = e.iteration;
  e.phase_index = meta.at("phase_index").get<size_t>();
  e.phase_start = meta.at("phase_start").get<int64_t>();
  e.phase_entered = true;
  e.solver.set_steps_taken(meta.at("solver_steps").get<int64_t>());
  e.loss_count = meta.at("loss_count").get<int64_t>();
  return e;
}

}  // namespace

RunResult run(const RunConfig& cfg_in, const std::string& out_dir,
              const std::string& resume_snapshot) {
  fs::create_directories(out_dir);
  Engine e = resume_snapshot.empty() ? make_engine(cfg_in) : restore_engine(resume_snapshot);
  const RunConfig& cfg = e.cfg;

  TraceWriter trace((fs::path(out_dir) / "trace.csv").string());
  MetricsWriter metrics((fs::path(out_dir) / "metrics.csv").string());
  {
    std::ofstream echo((fs::path(out_dir) / "run_config.json").string());
    echo << cfg.to_json();
  }

  const auto t0 = std::chrono::steady_clock::now();
  auto wall = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };

  RunResult res;
  res.out_dir = out_dir;
  res.f_initial = e.f_initial;

  auto current_f = [&] { return eval_f(e.poly, site_fractions(e.graph.sites())); };
  real f_now = current_f();

  int64_t evals_done = 0;
  auto do_eval = [&](bool initial) {
    const real acc = evaluate_accuracy(e);
    MetricsRow row;
    row.iteration = e.iteration;
    row.f = f_now;
    row.f_sched = e.ctrl.f_sched;
    row.lambda_f = e.ctrl.lambda_f;
    row.train_loss = e.loss_count ? e.loss_accum / static_cast<real>(e.loss_count)
                                  : std::numeric_limits<real>::quiet_NaN();
    row.eval_accuracy = acc;
    row.wall_time_s = static_cast<real>(wall());
    metrics.append(row);
    res.metrics.push_back(row);
    e.loss_accum = 0;
    e.loss_count = 0;
    e.f_last_eval = f_now;
    std::cout << "[taper] iter " << e.iteration << ": F " << real_to_string(f_now) << " sched "
              << real_to_string(e.ctrl.f_sched) << " acc " << real_to_string(acc) << "\n";
    if (!initial) {
      ++evals_done;
      if (cfg.snapshot_every_evals > 0 && evals_done % cfg.snapshot_every_evals == 0)
        write_snapshot(e, (fs::path(out_dir) / ("snapshot_" + std::to_string(e.iteration) +
                                                ".tpn")).string());
    }
  };

  if (resume_snapshot.empty()) do_eval(true);

  auto params = e.graph.parameters();
  Tape tape;
  while (true) {
    apply_phase_entry(e);
    bool advanced = false;
    while (e.phase_index < cfg.phases.size() && phase_done(e, f_now)) {
      ++e.phase_index;
      e.phase_start = e.iteration;
      e.phase_entered = false;
      apply_phase_entry(e);
      advanced = true;
    }
    (void)advanced;
    if (e.phase_index >= cfg.phases.size()) break;
    if (e.iteration >= cfg.max_iterations)
      fail("run exceeded max_iterations=%lld without finishing its phases (F=%g, F_sched=%g)",
           (long long)cfg.max_iterations, (double)f_now, (double)e.ctrl.f_sched);

    // minibatch
    std::vector<int64_t> idx(static_cast<size_t>(cfg.batch_size));
    for (int64_t s = 0; s < cfg.batch_size; ++s)
      idx[static_cast<size_t>(s)] =
          static_cast<int64_t>(rng_index(static_cast<uint64_t>(e.dataset.size(Dataset::Split::train)),
                                         cfg.seed, RngStream::batch_sample,
                                         static_cast<uint64_t>(e.iteration),
                                         static_cast<uint64_t>(s)));
    Tensor x;
    std::vector<int> labels;
    e.dataset.batch(Dataset::Split::train, idx, &x, &labels);

    tape.clear();
    for (Parameter* p : params) p->zero_grad();
    NodeId logits = e.graph.forward_train(tape, x, cfg.gate, cfg.seed, e.iteration);
    NodeId loss = ops::softmax_cross_entropy(tape, logits, labels);
    const real loss_v = tape.value(loss)[0];
    if (!std::isfinite(loss_v)) {
      write_snapshot(e, (fs::path(out_dir) / "snapshot_abort.tpn").string());
      fail("non-finite training loss at iteration %lld; state saved to snapshot_abort.tpn",
           (long long)e.iteration);
    }
    tape.backward(loss);
    e.solver.step(params);

    // controller + rho updates
    auto w = site_fractions(e.graph.sites());
    const real f_before = eval_f(e.poly, w);
    auto df_dp = grad_f_p(e.poly, w, e.graph.sites());
    const real k = compute_k(e.graph.sites(), df_dp, cfg.rho);
    update_lambda(e.ctrl, f_before, k, e.ctrl_eff);
    for (size_t si = 0; si < e.graph.sites().size(); ++si) {
      PruningSiteState& site = e.graph.sites()[si];
      std::vector<real> gf(static_cast<size_t>(site.channels), df_dp[si]);
      rho_step(site, e.graph.l0p(si), gf, e.ctrl.lambda_f, cfg.rho);
    }
    trace.append({e.iteration, f_before, e.ctrl.f_sched, e.ctrl.lambda_f, k});
    update_f_sched(e.ctrl, e.ctrl_eff);

    e.loss_accum += loss_v;
    ++e.loss_count;
    ++e.iteration;
    f_now = current_f();

    const bool interval_hit = e.iteration % cfg.eval_interval == 0;
    const bool f_hit = cfg.eval_f_step_fraction > 0 &&
                       (e.f_last_eval - f_now) >= cfg.eval_f_step_fraction * e.f_initial;
    if (interval_hit || f_hit) do_eval(false);
  }

  if (res.metrics.empty() || res.metrics.back().iteration != e.iteration) do_eval(false);
  write_snapshot(e, (fs::path(out_dir) / "snapshot_final.tpn").string());

  res.iterations = e.iteration;
  res.final_f = f_now;
  res.final_accuracy = res.metrics.back().eval_accuracy;

  if (cfg.extract_at_end) {
    PrunedConfiguration pc = extract(e.graph, cfg.extract_allow_dead_branches);
    GraphSpec pruned = pc.spec;
    pruned.init_weights = "extracted_weights.tpn";
    pruned.save((fs::path(out_dir) / "extracted_graph.json").string());
    json meta;
    meta["source_iteration"] = e.iteration;
    meta["mac_count"] = pc.mac_count;
    pc.weights.meta_json = meta.dump();
    write_container((fs::path(out_dir) / "extracted_weights.tpn").string(), pc.weights);
    json masks;
    for (size_t si = 0; si < pc.keep.size(); ++si) {
      json arr = json::array();
      for (char kbit : pc.keep[si]) arr.push_back(static_cast<int>(kbit));
      masks[e.graph.sites()[si].name] = arr;
    }
    std::ofstream mout((fs::path(out_dir) / "pruned_masks.json").string());
    mout << masks.dump(2) << "\n";
    res.extracted_macs = pc.mac_count;
    std::cout << "[taper] extracted network: " << pc.mac_count << " MAC ("
              << real_to_string(static_cast<real>(pc.mac_count) / e.f_initial * 100)
              << "% of initial)\n";
  }
  return res;
}

SnapshotState load_snapshot(const std::string& path) {
  Engine e = restore_engine(path);
  return SnapshotState{std::move(e.cfg), std::move(e.graph), e.iteration, e.ctrl.lambda_f,
                       e.ctrl.f_sched};
}

std::vector<SweepRow> mu_sweep(const RunConfig& base, const SweepSpec& spec,
                               const std::string& out_root) {
  if (spec.mus.size() < 2 && spec.seeds.size() < 2)
    fail("sweep needs at least two mu values or two seeds");
  fs::create_directories(out_root);
  std::vector<SweepRow> rows;
  for (real mu : spec.mus) {
    for (uint64_t seed : spec.seeds) {
      SweepRow row;
      row.mu = mu;
      row.seed = seed;
      RunConfig cfg = base;
      cfg.controller.mu = mu;
      cfg.seed = seed;
      const std::string dir =
          (fs::path(out_root) / ("mu" + real_to_string(mu) + "_seed" + std::to_string(seed)))
              .string();
      try {
        RunResult r = run(cfg, dir);
        const real target = spec.target_f_fraction * r.f_initial;
        for (const auto& t : read_trace((fs::path(dir) / "trace.csv").string())) {
          if (t.f <= target) {
            row.iters_to_target = t.iteration;
            break;
          }
        }
        auto acc = window_accuracy(r.metrics, target, spec.window_rel);
        if (row.iters_to_target < 0)
          row.error = "target F never reached";
        else if (!acc)
          row.error = "no metrics rows inside the accuracy window";
        else {
          row.window_accuracy = *acc;
          row.ok = true;
        }
      } catch (const std::exception& ex) {
        row.error = ex.what();
      }
      rows.push_back(std::move(row));
    }
  }
  std::ofstream out((fs::path(out_root) / "sweep.csv").string());
  out << "# taper.sweep.v1\nmu,seed,iters_to_target,window_accuracy,status\n";
  for (const auto& r : rows)
    out << real_to_string(r.mu) << ',' << r.seed << ',' << r.iters_to_target << ','
        << real_to_string(r.window_accuracy) << ',' << (r.ok ? "ok" : r.error) << '\n';
  return rows;
}

}  // namespace taper
