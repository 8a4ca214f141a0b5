// Run metrics: a per-iteration controller trace and a per-evaluation metrics
// table, both CSV with a versioned schema comment and a mandatory header row.
// Reals are written with shortest round-trip formatting so identical runs
// produce byte-identical files (wall_time_s is the one intentionally
// non-reproducible column).
#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "taper/common.hpp"

namespace taper {

struct TraceRow {
  int64_t iteration = 0;
  real f = 0;        // F(rho), MACs
  real f_sched = 0;  // MACs
  real lambda_f = 0;
  real k_sens = 0;
};

struct MetricsRow {
  int64_t iteration = 0;
  real f = 0;
  real f_sched = 0;
  real lambda_f = 0;
  real train_loss = 0;      // mean since the previous row; nan for the initial row
  real eval_accuracy = 0;   // top-1 on the eval split, deterministic masks
  real wall_time_s = 0;
};

std::string real_to_string(real v);

class TraceWriter {
 public:
  TraceWriter() = default;
  explicit TraceWriter(const std::string& path, bool append = false);
  void append(const TraceRow& row);

 private:
  std::ofstream out_;
};

class MetricsWriter {
 public:
  MetricsWriter() = default;
  explicit MetricsWriter(const std::string& path, bool append = false);
  void append(const MetricsRow& row);

 private:
  std::ofstream out_;
};

std::vector<TraceRow> read_trace(const std::string& path);
std::vector<MetricsRow> read_metrics(const std::string& path);

// (F, accuracy) pairs ordered by descending F.
std::vector<std::pair<real, real>> accuracy_curve(const std::vector<MetricsRow>& rows);

// Mean accuracy over rows with F inside [target*(1-rel_width), target*(1+rel_width)].
std::optional<real> window_accuracy(const std::vector<MetricsRow>& rows, real f_target,
                                    real rel_width);

// Two-segment piecewise-linear least squares on the accuracy curve; returns
// the breakpoint F (the knee where the quality slope changes). Needs >= 5
// points spanning the breakpoint candidates.
std::optional<real> knee_f(const std::vector<std::pair<real, real>>& curve);

}  // namespace taper
