#include "citysim/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <boost/math/distributions/normal.hpp>

#include "citysim/error.hpp"

namespace citysim {

namespace {

double progress(double start, double end, const char* what) {
  if (!(start > 0.0) || !(end >= 0.0)) {
    throw Error(ErrorCode::domain_error, std::string(what) + " needs a positive initial and non-negative final distance");
  }
  return std::clamp((start - end) / start, 0.0, 1.0);
}

std::string pct(const std::optional<double>& v) {
  if (!v) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", *v * 100.0);
  return buf;
}

std::string ci(const std::optional<Interval>& v) {
  if (!v) return "-";
  char buf[48];
  std::snprintf(buf, sizeof buf, "[%.1f, %.1f]", v->lower * 100.0, v->upper * 100.0);
  return buf;
}

std::string num(const std::optional<double>& v) {
  if (!v) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", *v);
  return buf;
}

}  // namespace

double subtask_success_rate(int completed, int total) {
  if (total < 1 || completed < 0 || completed > total) {
    throw Error(ErrorCode::domain_error, "subtask counts out of range");
  }
  return static_cast<double>(completed) / static_cast<double>(total);
}

double distance_progress(double d0, double dT) { return progress(d0, dT, "distance progress"); }
double task_progress(double D0, double DT) { return progress(D0, DT, "task progress"); }

Interval wilson_interval(std::int64_t successes, std::int64_t n, double confidence) {
  if (n < 1 || successes < 0 || successes > n || !(confidence > 0.0 && confidence < 1.0)) {
    throw Error(ErrorCode::domain_error, "wilson interval arguments out of range");
  }
  const boost::math::normal_distribution<double> unit;
  const double z = boost::math::quantile(boost::math::complement(unit, (1.0 - confidence) / 2.0));
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(successes) / nn;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nn;
  const double center = (p + z2 / (2.0 * nn)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn)) / denom;
  Interval out{center - half, center + half};
  // Exact endpoints at the boundaries, where the closed form rounds.
  if (successes == 0) out.lower = 0.0;
  if (successes == n) out.upper = 1.0;
  out.lower = std::max(out.lower, 0.0);
  out.upper = std::min(out.upper, 1.0);
  return out;
}

std::string_view task_kind_name(TaskKind k) { return k == TaskKind::mmnav ? "mmnav" : "mrs"; }

TaskKind task_kind_from_name(std::string_view s) {
  if (s == "mmnav") return TaskKind::mmnav;
  if (s == "mrs") return TaskKind::mrs;
  throw Error(ErrorCode::schema_error, "unknown task kind: " + std::string(s));
}

MetricsReport aggregate_report(std::span<const EpisodeResult> results, std::string model) {
  if (results.empty()) throw Error(ErrorCode::empty_input, "no episode results");
  MetricsReport r;
  r.model = std::move(model);
  std::int64_t successes = 0, met = 0;
  double ssr = 0, dp = 0, tp = 0, st = 0, dy = 0, red = 0;
  for (const EpisodeResult& e : results) {
    if (e.kind == TaskKind::mmnav) {
      ++r.mmnav_episodes;
      successes += e.success;
      ssr += subtask_success_rate(e.completed, e.subtasks);
      dp += distance_progress(e.d0, e.dT);
      st += e.safety.static_collisions;
      dy += e.safety.dynamic_collisions;
      red += e.safety.red_light_violations;
    } else {
      ++r.mrs_episodes;
      met += e.met;
      tp += task_progress(e.D0, e.DT);
    }
  }
  if (r.mmnav_episodes > 0) {
    const double n = static_cast<double>(r.mmnav_episodes);
    r.sr = static_cast<double>(successes) / n;
    r.sr_ci = wilson_interval(successes, static_cast<std::int64_t>(r.mmnav_episodes));
    r.ssr = ssr / n;
    r.dp = dp / n;
    r.mean_static = st / n;
    r.mean_dynamic = dy / n;
    r.mean_red_light = red / n;
  }
  if (r.mrs_episodes > 0) {
    const double n = static_cast<double>(r.mrs_episodes);
    r.csr = static_cast<double>(met) / n;
    r.csr_ci = wilson_interval(met, static_cast<std::int64_t>(r.mrs_episodes));
    r.tp = tp / n;
  }
  return r;
}

std::string format_report_table(std::span<const MetricsReport> rows) {
  std::string out;
  char line[512];
  std::snprintf(line, sizeof line, "%-16s %6s %16s %6s %6s %7s %7s %7s %6s %16s %6s\n", "model", "SR%", "SR 95% CI",
                "SSR%", "DP%", "static", "dynamic", "redlt", "CSR%", "CSR 95% CI", "TP%");
  out += line;
  for (const MetricsReport& r : rows) {
    std::snprintf(line, sizeof line, "%-16s %6s %16s %6s %6s %7s %7s %7s %6s %16s %6s\n", r.model.c_str(),
                  pct(r.sr).c_str(), ci(r.sr_ci).c_str(), pct(r.ssr).c_str(), pct(r.dp).c_str(),
                  num(r.mean_static).c_str(), num(r.mean_dynamic).c_str(), num(r.mean_red_light).c_str(),
                  pct(r.csr).c_str(), ci(r.csr_ci).c_str(), pct(r.tp).c_str());
    out += line;
  }
  return out;
}

}  // namespace citysim
