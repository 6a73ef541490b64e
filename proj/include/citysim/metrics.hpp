#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "citysim/env.hpp"

namespace citysim {

double subtask_success_rate(int completed, int total);
double distance_progress(double d0, double dT);
double task_progress(double D0, double DT);

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
};

/// Wilson score interval for a binomial proportion.
Interval wilson_interval(std::int64_t successes, std::int64_t n, double confidence = 0.95);

enum class TaskKind : std::uint8_t { mmnav, mrs };
std::string_view task_kind_name(TaskKind k);
TaskKind task_kind_from_name(std::string_view s);

struct EpisodeResult {
  std::string task;  // task id
  TaskKind kind = TaskKind::mmnav;
  bool success = false;
  int subtasks = 0;   // N
  int completed = 0;  // n_c
  double d0 = 0.0;    // Manhattan, agent to final goal
  double dT = 0.0;
  SafetyCounts safety;
  double D0 = 0.0;  // Manhattan, between robots
  double DT = 0.0;
  bool met = false;
  int steps = 0;
};

struct MetricsReport {
  std::string model;
  std::size_t mmnav_episodes = 0;
  std::size_t mrs_episodes = 0;
  // Fractions in [0, 1]; absent when the report holds no episode of that kind.
  std::optional<double> sr, ssr, dp;
  std::optional<Interval> sr_ci;
  std::optional<double> mean_static, mean_dynamic, mean_red_light;
  std::optional<double> csr, tp;
  std::optional<Interval> csr_ci;
};

/// SR = share of successes, SSR = mean per-episode ratio, DP/TP and safety
/// counts = means, CSR = share met. Throws EmptyInput.
MetricsReport aggregate_report(std::span<const EpisodeResult> results, std::string model = "agent");

/// Fixed-width text table, one row per report.
std::string format_report_table(std::span<const MetricsReport> rows);

}  // namespace citysim
