// Run orchestration: the prune/fine-tune loop, phase handling, periodic
// evaluation, metrics, snapshots and extraction; plus the mu sweep driver.
//
// Per-iteration order: forward/backward, weight step, sensitivity K,
// lambda_F update, rho step with the fresh lambda_F, budget step.
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "taper/controller.hpp"
#include "taper/dataset.hpp"
#include "taper/extract.hpp"
#include "taper/gate.hpp"
#include "taper/metrics.hpp"
#include "taper/rho_solver.hpp"
#include "taper/solvers.hpp"

namespace taper {

struct PhaseConfig {
  std::string name;
  // Stop condition: exactly one of these.
  int64_t stop_iters = -1;      // iterations within this phase
  real stop_f = -1;             // absolute MACs: phase ends once F(rho) <= stop_f
  real stop_f_fraction = -1;    // fraction of F(rho^0)
  // Optional per-phase overrides, applied at phase entry.
  std::optional<real> f0;            // absolute MACs
  std::optional<real> f0_fraction;   // of F(rho^0)
  bool f0_freeze = false;            // F_0 := current F_sched (constant-budget fine-tuning)
  std::optional<real> mu;
  std::optional<real> lr;            // weight learning rate
  std::optional<ScheduleKind> schedule;
};

struct RunConfig {
  GraphSpec graph;
  DatasetConfig dataset;
  uint64_t seed = 1;
  int64_t batch_size = 16;
  WeightSolverConfig weight_solver;
  GateConfig gate;
  RhoSolverConfig rho;
  ControllerConfig controller;
  std::vector<PhaseConfig> phases;
  int64_t eval_interval = 200;
  real eval_f_step_fraction = 0;  // extra eval when F fell by this fraction of F(rho^0); 0 = off
  int64_t eval_batch = 256;
  int64_t snapshot_every_evals = 0;  // 0 = final snapshot only
  int64_t max_iterations = 1000000;
  bool extract_allow_dead_branches = false;
  bool extract_at_end = true;

  static RunConfig load(const std::string& path);
  static RunConfig from_json(const std::string& text, const std::string& base_dir);
  std::string to_json() const;

  void validate() const;
};

struct RunResult {
  std::string out_dir;
  int64_t iterations = 0;
  real f_initial = 0;
  real final_f = 0;
  real final_accuracy = 0;
  std::vector<MetricsRow> metrics;
  int64_t extracted_macs = -1;  // -1 when extraction was skipped
};

// Executes a run into out_dir (trace.csv, metrics.csv, snapshots, extracted
// network). resume_snapshot, when set, restores the full state and continues.
RunResult run(const RunConfig& cfg, const std::string& out_dir,
              const std::string& resume_snapshot = "");

// Restores a graph + site state from a snapshot (for extraction and reports).
struct SnapshotState {
  RunConfig config;
  InstrumentedGraph graph;
  int64_t iteration = 0;
  real lambda_f = 0;
  real f_sched = 0;
};
SnapshotState load_snapshot(const std::string& path);

struct SweepSpec {
  std::vector<real> mus;
  std::vector<uint64_t> seeds{1};
  real target_f_fraction = real(0.5);
  real window_rel = real(0.04);  // accuracy window half-width around the target
};

struct SweepRow {
  real mu = 0;
  uint64_t seed = 0;
  int64_t iters_to_target = -1;
  real window_accuracy = 0;
  bool ok = false;
  std::string error;
};

// Runs |mus| x |seeds| sub-runs under out_root and tabulates iterations to the
// target F plus window-averaged accuracy at the target. Also writes sweep.csv.
std::vector<SweepRow> mu_sweep(const RunConfig& base, const SweepSpec& spec,
                               const std::string& out_root);

}  // namespace taper
