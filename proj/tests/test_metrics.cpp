#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "citysim/error.hpp"
#include "citysim/metrics.hpp"

using namespace citysim;

namespace {

// Two-sided normal critical value by Newton's method on erfc, independent of
// the library quantile.
double critical_z(double confidence) {
  const double target = 1.0 - confidence;  // P(|Z| > z)
  double z = 2.0;
  for (int i = 0; i < 100; ++i) {
    const double f = std::erfc(z / std::sqrt(2.0)) - target;
    const double df = -std::sqrt(2.0 / M_PI) * std::exp(-z * z / 2.0);
    const double step = f / df;
    z -= step;
    if (std::abs(step) < 1e-15) break;
  }
  return z;
}

// Wilson bounds as the roots of (p_hat - p)^2 = z^2 p (1 - p) / n.
Interval wilson_roots(std::int64_t k, std::int64_t n, double confidence) {
  const double z = critical_z(confidence);
  const double ph = static_cast<double>(k) / static_cast<double>(n);
  const double c = z * z / static_cast<double>(n);
  const double A = 1.0 + c;
  const double B = -(2.0 * ph + c);
  const double C = ph * ph;
  const double disc = std::sqrt(B * B - 4.0 * A * C);
  return {(-B - disc) / (2.0 * A), (-B + disc) / (2.0 * A)};
}

EpisodeResult mmnav(bool success, int completed, int total, double d0, double dT, SafetyCounts s = {}) {
  EpisodeResult e;
  e.kind = TaskKind::mmnav;
  e.success = success;
  e.completed = completed;
  e.subtasks = total;
  e.d0 = d0;
  e.dT = dT;
  e.safety = s;
  return e;
}

EpisodeResult mrs(bool met, double D0, double DT) {
  EpisodeResult e;
  e.kind = TaskKind::mrs;
  e.met = met;
  e.success = met;
  e.D0 = D0;
  e.DT = DT;
  return e;
}

}  // namespace

TEST_CASE("subtask success rate") {
  CHECK(subtask_success_rate(0, 4) == 0.0);
  CHECK(subtask_success_rate(4, 4) == 1.0);
  CHECK(subtask_success_rate(1, 4) == 0.25);
  CHECK_THROWS_AS(subtask_success_rate(0, 0), Error);
  CHECK_THROWS_AS(subtask_success_rate(5, 4), Error);
  CHECK_THROWS_AS(subtask_success_rate(-1, 4), Error);
}

TEST_CASE("distance and task progress") {
  CHECK(distance_progress(200, 50) == 0.75);
  CHECK(distance_progress(100, 100) == 0.0);
  CHECK(distance_progress(100, 150) == 0.0);
  CHECK(task_progress(576, 0) == 1.0);
  CHECK(task_progress(576, 576) == 0.0);
  CHECK(task_progress(576, 700) == 0.0);
  CHECK_THROWS_AS(distance_progress(0, 5), Error);
  CHECK_THROWS_AS(task_progress(0, 0), Error);
  CHECK_THROWS_AS(distance_progress(10, -1), Error);
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(0.0, 2000.0);
  for (int i = 0; i < 1000; ++i) {
    const double a = u(gen) + 1e-3, b = u(gen);
    const double p = distance_progress(a, b);
    CHECK(p >= 0.0);
    CHECK(p <= 1.0);
  }
}

TEST_CASE("wilson interval against the root form") {
  CHECK(critical_z(0.95) == doctest::Approx(1.959963984540054).epsilon(1e-14));
  const Interval w = wilson_interval(2, 50, 0.95);
  const Interval o = wilson_roots(2, 50, 0.95);
  CHECK(std::abs(w.lower - o.lower) < 1e-9);
  CHECK(std::abs(w.upper - o.upper) < 1e-9);

  std::mt19937_64 gen(17);
  for (int i = 0; i < 100; ++i) {
    const auto n = static_cast<std::int64_t>(1 + gen() % 500);
    const auto k = static_cast<std::int64_t>(gen() % static_cast<std::uint64_t>(n + 1));
    const double conf = i % 2 == 0 ? 0.95 : 0.9;
    const Interval a = wilson_interval(k, n, conf);
    const Interval b = wilson_roots(k, n, conf);
    CAPTURE(k);
    CAPTURE(n);
    CHECK(std::abs(a.lower - std::max(b.lower, 0.0)) < 1e-9);
    CHECK(std::abs(a.upper - std::min(b.upper, 1.0)) < 1e-9);
  }
}

TEST_CASE("wilson boundaries and monotonicity") {
  for (std::int64_t n : {1, 7, 50, 1000}) {
    CHECK(wilson_interval(0, n).lower == 0.0);
    CHECK(wilson_interval(n, n).upper == 1.0);
  }
  double last = 1.0;
  for (std::int64_t n = 10; n <= 10000; n *= 10) {
    const Interval w = wilson_interval(3 * n / 10, n);
    const double width = w.upper - w.lower;
    CHECK(width < last);
    last = width;
  }
  CHECK_THROWS_AS(wilson_interval(1, 0), Error);
  CHECK_THROWS_AS(wilson_interval(3, 2), Error);
  CHECK_THROWS_AS(wilson_interval(1, 2, 1.0), Error);
}

TEST_CASE("aggregate report") {
  CHECK_THROWS_AS(aggregate_report({}), Error);

  SUBCASE("single episode") {
    const std::vector<EpisodeResult> one{mmnav(false, 1, 4, 200, 50, {2, 1, 3})};
    const MetricsReport r = aggregate_report(one);
    CHECK(*r.sr == 0.0);
    CHECK(*r.ssr == 0.25);
    CHECK(*r.dp == 0.75);
    CHECK(*r.mean_static == 2.0);
    CHECK(*r.mean_dynamic == 1.0);
    CHECK(*r.mean_red_light == 3.0);
    CHECK_FALSE(r.csr.has_value());
    CHECK_FALSE(r.tp.has_value());
  }

  SUBCASE("all success") {
    const std::vector<EpisodeResult> all{mmnav(true, 4, 4, 300, 0), mmnav(true, 3, 3, 120, 6)};
    const MetricsReport r = aggregate_report(all);
    CHECK(*r.sr == 1.0);
    CHECK(r.sr_ci->upper == 1.0);
    CHECK(*r.ssr == 1.0);
    CHECK(*r.dp == doctest::Approx((1.0 + 114.0 / 120.0) / 2.0));
  }

  SUBCASE("fifty synthetic episodes") {
    // Episode i: success on i % 5 == 0, i % 4 of 4 subtasks, d0 = 100, dT = i,
    // static = i % 3; MRS half met on even i with DT = 0, else DT = 400 of 400.
    std::vector<EpisodeResult> rs;
    for (int i = 0; i < 50; ++i) {
      rs.push_back(mmnav(i % 5 == 0, i % 4, 4, 100, i, {i % 3, 0, 0}));
      rs.push_back(mrs(i % 2 == 0, 400, i % 2 == 0 ? 0 : 400));
    }
    const MetricsReport r = aggregate_report(rs, "synthetic");
    CHECK(r.mmnav_episodes == 50);
    CHECK(r.mrs_episodes == 50);
    CHECK(*r.sr == doctest::Approx(10.0 / 50.0));
    // i % 4 over 0..49: 13 zeros, 13 ones, 12 twos, 12 threes.
    CHECK(*r.ssr == doctest::Approx((13 * 0.0 + 13 * 0.25 + 12 * 0.5 + 12 * 0.75) / 50.0));
    // Mean of (100 - i) / 100 over i = 0..49.
    CHECK(*r.dp == doctest::Approx((100.0 - 24.5) / 100.0));
    // i % 3 over 0..49: 17 zeros, 17 ones, 16 twos.
    CHECK(*r.mean_static == doctest::Approx((17.0 + 32.0) / 50.0));
    CHECK(*r.csr == 0.5);
    CHECK(*r.tp == 0.5);
    const Interval ci = wilson_interval(25, 50);
    CHECK(r.csr_ci->lower == ci.lower);
    CHECK(r.csr_ci->upper == ci.upper);
    const auto table = format_report_table(std::vector<MetricsReport>{r});
    CHECK(table.find("synthetic") != std::string::npos);
    CHECK(table.find("20.0") != std::string::npos);
  }
}

TEST_CASE("aggregation is count weighted under concatenation") {
  std::mt19937_64 gen(5);
  auto random_results = [&](int n) {
    std::vector<EpisodeResult> v;
    for (int i = 0; i < n; ++i) {
      const int total = 2 + static_cast<int>(gen() % 3);
      v.push_back(mmnav(gen() % 2, static_cast<int>(gen() % (total + 1)), total, 50 + gen() % 500, gen() % 600,
                        {static_cast<int>(gen() % 4), static_cast<int>(gen() % 3), static_cast<int>(gen() % 2)}));
    }
    return v;
  };
  const auto a = random_results(13), b = random_results(29);
  auto both = a;
  both.insert(both.end(), b.begin(), b.end());
  const MetricsReport ra = aggregate_report(a), rb = aggregate_report(b), rab = aggregate_report(both);
  auto weighted = [](double x, double y) { return (13.0 * x + 29.0 * y) / 42.0; };
  CHECK(*rab.sr == doctest::Approx(weighted(*ra.sr, *rb.sr)));
  CHECK(*rab.ssr == doctest::Approx(weighted(*ra.ssr, *rb.ssr)));
  CHECK(*rab.dp == doctest::Approx(weighted(*ra.dp, *rb.dp)));
  CHECK(*rab.mean_static == doctest::Approx(weighted(*ra.mean_static, *rb.mean_static)));
  CHECK(*rab.mean_dynamic == doctest::Approx(weighted(*ra.mean_dynamic, *rb.mean_dynamic)));
  CHECK(*rab.mean_red_light == doctest::Approx(weighted(*ra.mean_red_light, *rb.mean_red_light)));
}

TEST_CASE("task kind names") {
  CHECK(task_kind_from_name(task_kind_name(TaskKind::mmnav)) == TaskKind::mmnav);
  CHECK(task_kind_from_name(task_kind_name(TaskKind::mrs)) == TaskKind::mrs);
  CHECK_THROWS_AS(task_kind_from_name("x"), Error);
}
