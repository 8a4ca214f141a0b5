#include "taper/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>

namespace taper {

std::string real_to_string(real v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof(buf), static_cast<double>(v));
  return std::string(buf, r.ptr);
}

namespace {

constexpr const char* kTraceSchema = "# taper.trace.v1";
constexpr const char* kTraceHeader = "iteration,f_mac,f_sched_mac,lambda_f,k_sens";
constexpr const char* kMetricsSchema = "# taper.metrics.v1";
constexpr const char* kMetricsHeader =
    "iteration,f_mac,f_sched_mac,lambda_f,train_loss,eval_accuracy,wall_time_s";

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

real parse_real(const std::string& s) {
  if (s == "nan" || s == "-nan") return std::numeric_limits<real>::quiet_NaN();
  return static_cast<real>(std::strtod(s.c_str(), nullptr));
}

}  // namespace

TraceWriter::TraceWriter(const std::string& path, bool append)
    : out_(path, append ? std::ios::app : std::ios::trunc) {
  if (!out_) fail("cannot open trace file '%s'", path.c_str());
  if (!append) out_ << kTraceSchema << "\n" << kTraceHeader << "\n";
}

void TraceWriter::append(const TraceRow& r) {
  out_ << r.iteration << ',' << real_to_string(r.f) << ',' << real_to_string(r.f_sched) << ','
       << real_to_string(r.lambda_f) << ',' << real_to_string(r.k_sens) << '\n';
  out_.flush();
}

MetricsWriter::MetricsWriter(const std::string& path, bool append)
    : out_(path, append ? std::ios::app : std::ios::trunc) {
  if (!out_) fail("cannot open metrics file '%s'", path.c_str());
  if (!append) out_ << kMetricsSchema << "\n" << kMetricsHeader << "\n";
}

void MetricsWriter::append(const MetricsRow& r) {
  out_ << r.iteration << ',' << real_to_string(r.f) << ',' << real_to_string(r.f_sched) << ','
       << real_to_string(r.lambda_f) << ',' << real_to_string(r.train_loss) << ','
       << real_to_string(r.eval_accuracy) << ',' << real_to_string(r.wall_time_s) << '\n';
  out_.flush();
}

namespace {

std::vector<std::vector<std::string>> read_rows(const std::string& path, const char* header,
                                                size_t ncols) {
  std::ifstream in(path);
  if (!in) fail("cannot open '%s'", path.c_str());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  bool saw_header = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!saw_header) {
      if (line != header)
        fail("'%s': unexpected header '%s' (schema change?)", path.c_str(), line.c_str());
      saw_header = true;
      continue;
    }
    auto cells = split_csv(line);
    if (cells.size() != ncols)
      fail("'%s': row with %zu cells, expected %zu", path.c_str(), cells.size(), ncols);
    rows.push_back(std::move(cells));
  }
  if (!saw_header) fail("'%s': missing header row", path.c_str());
  return rows;
}

}  // namespace

std::vector<TraceRow> read_trace(const std::string& path) {
  std::vector<TraceRow> out;
  for (const auto& c : read_rows(path, kTraceHeader, 5)) {
    TraceRow r;
    r.iteration = std::strtoll(c[0].c_str(), nullptr, 10);
    r.f = parse_real(c[1]);
    r.f_sched = parse_real(c[2]);
    r.lambda_f = parse_real(c[3]);
    r.k_sens = parse_real(c[4]);
    out.push_back(r);
  }
  return out;
}

std::vector<MetricsRow> read_metrics(const std::string& path) {
  std::vector<MetricsRow> out;
  for (const auto& c : read_rows(path, kMetricsHeader, 7)) {
    MetricsRow r;
    r.iteration = std::strtoll(c[0].c_str(), nullptr, 10);
    r.f = parse_real(c[1]);
    r.f_sched = parse_real(c[2]);
    r.lambda_f = parse_real(c[3]);
    r.train_loss = parse_real(c[4]);
    r.eval_accuracy = parse_real(c[5]);
    r.wall_time_s = parse_real(c[6]);
    out.push_back(r);
  }
  return out;
}

std::vector<std::pair<real, real>> accuracy_curve(const std::vector<MetricsRow>& rows) {
  if (rows.empty()) fail("accuracy_curve: empty metrics");
  std::vector<std::pair<real, real>> c;
  for (const auto& r : rows) c.emplace_back(r.f, r.eval_accuracy);
  std::sort(c.begin(), c.end(), [](auto& a, auto& b) { return a.first > b.first; });
  return c;
}

std::optional<real> window_accuracy(const std::vector<MetricsRow>& rows, real f_target,
                                    real rel_width) {
  real sum = 0;
  int64_t n = 0;
  for (const auto& r : rows) {
    if (r.f >= f_target * (1 - rel_width) && r.f <= f_target * (1 + rel_width)) {
      sum += r.eval_accuracy;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<real>(n);
}

namespace {

// Least-squares line fit; returns SSE.
double line_sse(const std::vector<std::pair<real, real>>& pts, size_t b, size_t e) {
  const size_t n = e - b;
  if (n < 2) return 0;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (size_t i = b; i < e; ++i) {
    sx += pts[i].first;
    sy += pts[i].second;
    sxx += double(pts[i].first) * pts[i].first;
    sxy += double(pts[i].first) * pts[i].second;
  }
  const double denom = n * sxx - sx * sx;
  double slope = 0, icpt = sy / n;
  if (std::abs(denom) > 1e-30) {
    slope = (n * sxy - sx * sy) / denom;
    icpt = (sy - slope * sx) / n;
  }
  double sse = 0;
  for (size_t i = b; i < e; ++i) {
    const double r = pts[i].second - (slope * pts[i].first + icpt);
    sse += r * r;
  }
  return sse;
}

}  // namespace

std::optional<real> knee_f(const std::vector<std::pair<real, real>>& curve) {
  const size_t n = curve.size();
  if (n < 5) return std::nullopt;
  size_t best = 0;
  double best_sse = std::numeric_limits<double>::infinity();
  for (size_t j = 2; j + 2 < n; ++j) {
    const double sse = line_sse(curve, 0, j + 1) + line_sse(curve, j, n);
    if (sse < best_sse) {
      best_sse = sse;
      best = j;
    }
  }
  return curve[best].first;
}

}  // namespace taper
