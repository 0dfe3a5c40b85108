#include <doctest.h>

#include "opbil/metrics.hpp"

#include <algorithm>
#include <random>
#include <set>

using namespace opbil;

namespace {

// Every threshold drawn from the score set, counted one sample at a time.
PRCurve brute_force_curve(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels) {
  std::set<double> thresholds(scores.begin(), scores.end());
  PRCurve out;
  for (double t : thresholds) {
    long tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      const bool p = scores[i] >= t;
      if (p && labels[i]) ++tp;
      if (p && !labels[i]) ++fp;
      if (!p && labels[i]) ++fn;
    }
    out.push_back({t, tp + fp ? double(tp) / double(tp + fp) : 0.0,
                   tp + fn ? double(tp) / double(tp + fn) : 0.0});
  }
  return out;
}

}  // namespace

TEST_CASE("metrics from counts") {
  const Metrics m = metrics_from_counts(6, 2, 4, 8);
  CHECK(m.precision == 0.75);
  CHECK(m.recall == 0.6);
  CHECK(m.f1 == doctest::Approx(2.0 / 3.0));
  const Metrics none = metrics_from_counts(0, 0, 5, 10);
  CHECK(none.precision == 0.0);
  CHECK(none.recall == 0.0);
  CHECK(none.f1 == 0.0);
}

TEST_CASE("reported F1 is consistent with reported precision and recall") {
  CHECK(f1_score(0.96, 0.97) == doctest::Approx(0.965).epsilon(1e-3));
}

TEST_CASE("metric identities on random counts") {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<long> c(0, 50);
  for (int i = 0; i < 1000; ++i) {
    const long tp = c(rng), fp = c(rng), fn = c(rng), tn = c(rng);
    const Metrics m = metrics_from_counts(tp, fp, fn, tn);
    CHECK(m.precision == (tp + fp ? double(tp) / double(tp + fp) : 0.0));
    CHECK(m.recall == (tp + fn ? double(tp) / double(tp + fn) : 0.0));
    const double s = m.precision + m.recall;
    CHECK(m.f1 == (s == 0.0 ? 0.0 : 2.0 * m.precision * m.recall / s));
  }
}

TEST_CASE("score metrics use a strict threshold") {
  const std::vector<double> s{0.9, 0.5, 0.2, 0.7};
  const std::vector<std::uint8_t> y{1, 1, 0, 0};
  const Metrics m = score_metrics(s, y, 0.5);
  CHECK(m.tp == 1);
  CHECK(m.fn == 1);
  CHECK(m.fp == 1);
  CHECK(m.tn == 1);
  const std::vector<double> neg(4, 0.1);
  CHECK(score_metrics(neg, y).recall == 0.0);
  CHECK(score_metrics(neg, y).precision == 0.0);
}

TEST_CASE("PR curve equals exhaustive enumeration on hand cases") {
  const std::vector<double> s10{0.95, 0.9, 0.8, 0.8, 0.6, 0.55, 0.4, 0.3, 0.2, 0.1};
  const std::vector<std::uint8_t> y10{1, 1, 0, 1, 1, 0, 0, 1, 0, 0};
  const PRCurve c = pr_curve(s10, y10);
  const PRCurve b = brute_force_curve(s10, y10);
  REQUIRE(c.size() == b.size());
  REQUIRE(c.size() == 9);
  for (std::size_t i = 0; i < c.size(); ++i) {
    CHECK(c[i].threshold == b[i].threshold);
    CHECK(c[i].precision == b[i].precision);
    CHECK(c[i].recall == b[i].recall);
  }
  // threshold 0.8 admits four samples, three positive, out of five positives
  CHECK(c[6].threshold == 0.8);
  CHECK(c[6].precision == 0.75);
  CHECK(c[6].recall == 0.6);

  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> level(0, 9), bit(0, 1);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 10 + std::size_t(trial % 11);
    std::vector<double> s(n);
    std::vector<std::uint8_t> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = level(rng) / 10.0;
      y[i] = std::uint8_t(bit(rng));
    }
    const PRCurve got = pr_curve(s, y), want = brute_force_curve(s, y);
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(got[i].threshold == want[i].threshold);
      CHECK(got[i].precision == want[i].precision);
      CHECK(got[i].recall == want[i].recall);
      if (i > 0) CHECK(got[i].recall <= got[i - 1].recall);
    }
  }
}

TEST_CASE("PR curve edge cases") {
  const std::vector<double> sep{0.9, 0.8, 0.2, 0.1};
  const std::vector<std::uint8_t> y{1, 1, 0, 0};
  for (const PRPoint& p : pr_curve(sep, y))
    if (p.threshold > 0.5) CHECK(p.precision == 1.0);

  const std::vector<double> flat(5, 0.5);
  const std::vector<std::uint8_t> y5{1, 0, 0, 1, 0};
  const PRCurve c = pr_curve(flat, y5);
  REQUIRE(c.size() == 1);
  CHECK(c[0].precision == 0.4);
  CHECK(c[0].recall == 1.0);
  CHECK(pr_curve({}, {}).empty());
  CHECK_THROWS_AS(pr_curve(flat, y), MetricsError);
}

TEST_CASE("distance bands") {
  const auto bands = default_bands();
  REQUIRE(bands.size() == 3);
  CHECK(bands[1].lo == 5.0);
  CHECK(bands[2].hi == 15.0);

  // 12 samples: positives at 1, 3, 6, 7, 9, 11, 14 m (+ one at 15.2 m), four negatives.
  const std::vector<double> d{1, 3, 6, 7, 9, 11, 14, 15.2, 20, 30, 2, 12};
  const std::vector<std::uint8_t> y{1, 1, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0};
  const std::vector<std::uint8_t> p{1, 1, 1, 0, 1, 0, 0, 1, 1, 0, 1, 0};
  const DistanceBandReport r = distance_stratified_recall(p, y, d, bands);
  CHECK(r.rows[0].positives == 2);
  CHECK(r.rows[0].recall == 1.0);
  CHECK(r.rows[1].positives == 3);
  CHECK(r.rows[1].detected == 2);
  CHECK(r.rows[1].recall == doctest::Approx(2.0 / 3.0));
  CHECK(r.rows[2].positives == 2);
  CHECK(r.rows[2].recall == 0.0);
  REQUIRE(r.unassigned.size() == 1);
  CHECK(r.unassigned[0] == 7);

  const std::vector<DistanceBand> overlapping{{0, 6}, {5, 10}};
  CHECK_THROWS_AS(distance_stratified_recall(p, y, d, overlapping), MetricsError);
}
