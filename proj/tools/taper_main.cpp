// taper: channel pruning with a tapering resource budget.
//
// Subcommands:
//   run      execute a prune/fine-tune run from a config
//   sweep    run the same config across mu values and seeds, tabulate
//   report   FLOPs-accuracy curve (and knee) from a metrics CSV
//   extract  slice the pruned dense network out of a snapshot
//   cost     per-layer resource breakdown of a network

#include <CLI11.hpp>

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "taper/extract.hpp"
#include "taper/harness.hpp"
#include "taper/resource.hpp"

using namespace taper;

namespace {

int cmd_run(const std::string& config, const std::string& out, const std::string& resume,
            uint64_t seed, bool has_seed) {
  RunConfig cfg;
  if (!config.empty()) cfg = RunConfig::load(config);
  else if (resume.empty()) throw Error("run: --config or --resume is required");
  if (has_seed) cfg.seed = seed;
  RunResult r = run(cfg, out, resume);
  std::printf("run finished: %" PRId64 " iterations, F %.6g -> %.6g MAC (%.1f%%), accuracy %.4f\n",
              r.iterations, (double)r.f_initial, (double)r.final_f,
              100.0 * (double)r.final_f / (double)r.f_initial, (double)r.final_accuracy);
  return 0;
}

int cmd_sweep(const std::string& config, const std::string& out, std::vector<double> mus,
              std::vector<uint64_t> seeds, double target, double window, uint64_t seed,
              bool has_seed) {
  RunConfig cfg = RunConfig::load(config);
  if (has_seed) cfg.seed = seed;
  SweepSpec spec;
  for (double m : mus) spec.mus.push_back(static_cast<real>(m));
  if (!seeds.empty()) spec.seeds = seeds;
  spec.target_f_fraction = static_cast<real>(target);
  spec.window_rel = static_cast<real>(window);
  auto rows = mu_sweep(cfg, spec, out);
  std::printf("%-12s %-6s %-16s %-16s %s\n", "mu", "seed", "iters_to_target", "window_accuracy",
              "status");
  for (const auto& r : rows)
    std::printf("%-12g %-6" PRIu64 " %-16" PRId64 " %-16.4f %s\n", (double)r.mu, r.seed,
                r.iters_to_target, (double)r.window_accuracy, r.ok ? "ok" : r.error.c_str());
  return 0;
}

int cmd_report(const std::string& metrics_path, bool knee, double window_target,
               double window_rel, const std::string& export_path) {
  auto rows = read_metrics(metrics_path);
  if (rows.empty()) throw Error("report: metrics file has no rows");
  auto curve = accuracy_curve(rows);
  std::printf("%-16s %s\n", "f_mac", "accuracy");
  for (const auto& [f, a] : curve) std::printf("%-16.6g %.4f\n", (double)f, (double)a);
  if (window_target > 0) {
    auto acc = window_accuracy(rows, static_cast<real>(window_target),
                               static_cast<real>(window_rel));
    if (acc)
      std::printf("window accuracy @ %.6g MAC (+/-%.1f%%): %.4f\n", window_target,
                  100 * window_rel, (double)*acc);
    else
      std::printf("window accuracy @ %.6g MAC: no rows in window\n", window_target);
  }
  if (knee) {
    auto kf = knee_f(curve);
    if (kf)
      std::printf("knee (slope change) at F = %.6g MAC\n", (double)*kf);
    else
      std::printf("knee: too few points for a piecewise fit\n");
  }
  if (!export_path.empty()) {
    std::ofstream out(export_path);
    out << "f_mac,accuracy\n";
    for (const auto& [f, a] : curve) out << real_to_string(f) << ',' << real_to_string(a) << '\n';
    std::printf("curve exported to %s\n", export_path.c_str());
  }
  return 0;
}

int cmd_extract(const std::string& snapshot, const std::string& out, bool allow_dead) {
  SnapshotState st = load_snapshot(snapshot);
  PrunedConfiguration pc = extract(st.graph, allow_dead);
  std::filesystem::create_directories(out);
  GraphSpec spec = pc.spec;
  spec.init_weights = "extracted_weights.tpn";
  spec.save((std::filesystem::path(out) / "extracted_graph.json").string());
  write_container((std::filesystem::path(out) / "extracted_weights.tpn").string(), pc.weights);
  std::printf("extracted %s at iteration %" PRId64 ": %" PRId64 " MAC\n", spec.name.c_str(),
              st.iteration, pc.mac_count);
  for (size_t s = 0; s < pc.keep.size(); ++s) {
    int64_t kept = 0;
    for (char kbit : pc.keep[s]) kept += kbit != 0;
    std::printf("  site %-20s %" PRId64 "/%zu channels kept\n",
                st.graph.sites()[s].name.c_str(), kept, pc.keep[s].size());
  }
  return 0;
}

int cmd_cost(const std::string& config, const std::string& graph_path) {
  GraphSpec spec;
  if (!graph_path.empty())
    spec = GraphSpec::load(graph_path);
  else if (!config.empty())
    spec = RunConfig::load(config).graph;
  else
    throw Error("cost: --config or --graph is required");
  InstrumentedGraph g = InstrumentedGraph::build(spec);
  auto poly = build_polynomial(g);
  auto terms = layer_terms(g);
  auto site_name = [&](int s) {
    return s < 0 ? std::string("-") : g.sites()[static_cast<size_t>(s)].name;
  };
  std::printf("%-20s %-14s %-14s %s\n", "layer", "site_in", "site_out", "mac");
  for (const auto& t : terms)
    std::printf("%-20s %-14s %-14s %" PRId64 "\n", t.layer.c_str(), site_name(t.site_in).c_str(),
                site_name(t.site_out).c_str(), t.macs);
  const double full = (double)poly.full();
  std::printf("total: %.0f MAC (%.4f GMAC); constant %.0f, %zu linear, %zu quadratic terms\n",
              full, full / 1e9, (double)poly.constant, poly.lin.size(), poly.quad.size());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"channel pruning with a tapering resource budget"};
  app.require_subcommand(1);

  std::string config, out, resume, metrics_path, snapshot, graph_path, export_path;
  uint64_t seed = 0;
  std::vector<double> mus;
  std::vector<uint64_t> seeds;
  double target = 0.5, window = 0.04, window_target = 0;
  bool knee = false, allow_dead = false;

  auto* c_run = app.add_subcommand("run", "execute a pruning run");
  c_run->add_option("--config", config, "run config JSON");
  auto* seed_opt = c_run->add_option("--seed", seed, "override the run seed");
  c_run->add_option("--out", out, "output directory")->required();
  c_run->add_option("--resume", resume, "resume from a snapshot");

  auto* c_sweep = app.add_subcommand("sweep", "mu sweep over a base config");
  c_sweep->add_option("--config", config, "base run config JSON")->required();
  c_sweep->add_option("--out", out, "output root directory")->required();
  c_sweep->add_option("--mu", mus, "mu values")->required()->delimiter(',');
  c_sweep->add_option("--seeds", seeds, "seeds (default: config seed)")->delimiter(',');
  c_sweep->add_option("--target-f", target, "target F as a fraction of F(0) [0.5]");
  c_sweep->add_option("--window", window, "accuracy window half-width [0.04]");
  auto* sweep_seed_opt = c_sweep->add_option("--seed", seed, "override the base seed");

  auto* c_report = app.add_subcommand("report", "FLOPs-accuracy curve from metrics.csv");
  c_report->add_option("--metrics", metrics_path, "metrics.csv path")->required();
  c_report->add_flag("--knee", knee, "detect the accuracy-drop knee");
  c_report->add_option("--window-target", window_target, "window-average accuracy at this F");
  c_report->add_option("--window-rel", window, "window half-width [0.04]");
  c_report->add_option("--export", export_path, "write plot-ready curve CSV");

  auto* c_extract = app.add_subcommand("extract", "extract the pruned dense network");
  c_extract->add_option("--snapshot", snapshot, "snapshot .tpn")->required();
  c_extract->add_option("--out", out, "output directory")->required();
  c_extract->add_flag("--allow-dead-branches", allow_dead,
                      "drop concat branches whose site keeps zero channels");

  auto* c_cost = app.add_subcommand("cost", "per-layer resource breakdown");
  c_cost->add_option("--config", config, "run config JSON");
  c_cost->add_option("--graph", graph_path, "graph spec JSON");

  CLI11_PARSE(app, argc, argv);

  try {
    if (c_run->parsed()) return cmd_run(config, out, resume, seed, seed_opt->count() > 0);
    if (c_sweep->parsed())
      return cmd_sweep(config, out, mus, seeds, target, window, seed,
                       sweep_seed_opt->count() > 0);
    if (c_report->parsed())
      return cmd_report(metrics_path, knee, window_target, window, export_path);
    if (c_extract->parsed()) return cmd_extract(snapshot, out, allow_dead);
    if (c_cost->parsed()) return cmd_cost(config, graph_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
