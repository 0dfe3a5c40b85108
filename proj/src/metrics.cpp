#include "opbil/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <string>

namespace opbil {
namespace {

void check_lengths(std::size_t a, std::size_t b, const char* what) {
  if (a != b)
    throw MetricsError(std::string(what) + ": length mismatch " + std::to_string(a) + " vs " +
                       std::to_string(b));
}

double ratio(long num, long den) { return den == 0 ? 0.0 : double(num) / double(den); }

}  // namespace

double f1_score(double precision, double recall) {
  const double s = precision + recall;
  return s == 0.0 ? 0.0 : 2.0 * precision * recall / s;
}

Metrics metrics_from_counts(long tp, long fp, long fn, long tn, double threshold) {
  Metrics m{tp, fp, fn, tn};
  m.precision = ratio(tp, tp + fp);
  m.recall = ratio(tp, tp + fn);
  m.f1 = f1_score(m.precision, m.recall);
  m.threshold = threshold;
  return m;
}

Metrics score_metrics(std::span<const double> scores, std::span<const std::uint8_t> labels,
                      double threshold) {
  check_lengths(scores.size(), labels.size(), "score_metrics");
  long tp = 0, fp = 0, fn = 0, tn = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] > threshold;
    if (labels[i]) (predicted ? tp : fn) += 1;
    else (predicted ? fp : tn) += 1;
  }
  return metrics_from_counts(tp, fp, fn, tn, threshold);
}

PRCurve pr_curve(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  check_lengths(scores.size(), labels.size(), "pr_curve");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  const long positives = long(std::count_if(labels.begin(), labels.end(), [](auto l) { return l != 0; }));

  // Walk from the highest score down; each distinct score closes one group.
  PRCurve curve;
  long tp = 0;
  long fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double t = scores[order[i]];
    for (; i < order.size() && scores[order[i]] == t; ++i) (labels[order[i]] ? tp : fp) += 1;
    curve.push_back({t, ratio(tp, tp + fp), ratio(tp, positives)});
  }
  std::reverse(curve.begin(), curve.end());
  return curve;
}

std::vector<DistanceBand> default_bands(double radius) {
  return {{0.0, radius / 3.0}, {radius / 3.0, 2.0 * radius / 3.0}, {2.0 * radius / 3.0, radius}};
}

DistanceBandReport distance_stratified_recall(std::span<const std::uint8_t> predictions,
                                              std::span<const std::uint8_t> labels,
                                              std::span<const double> distances,
                                              std::span<const DistanceBand> bands) {
  check_lengths(predictions.size(), labels.size(), "distance_stratified_recall");
  check_lengths(distances.size(), labels.size(), "distance_stratified_recall");
  for (std::size_t b = 0; b < bands.size(); ++b) {
    if (!(bands[b].lo < bands[b].hi))
      throw MetricsError("band " + std::to_string(b) + " is empty");
    if (b > 0 && bands[b].lo < bands[b - 1].hi)
      throw MetricsError("band " + std::to_string(b) + " overlaps or precedes band " +
                         std::to_string(b - 1));
  }

  DistanceBandReport report;
  for (const DistanceBand& band : bands) report.rows.push_back({band});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!labels[i]) continue;
    auto row = std::find_if(report.rows.begin(), report.rows.end(), [&](const BandRecall& r) {
      return distances[i] >= r.band.lo && distances[i] < r.band.hi;
    });
    if (row == report.rows.end()) {
      report.unassigned.push_back(i);
      continue;
    }
    row->positives += 1;
    row->detected += predictions[i] ? 1 : 0;
  }
  for (BandRecall& r : report.rows) r.recall = ratio(r.detected, r.positives);
  return report;
}

}  // namespace opbil
