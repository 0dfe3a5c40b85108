#ifndef OPBIL_METRICS_HPP
#define OPBIL_METRICS_HPP

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace opbil {

/// Positive-class detection metrics at one threshold.
struct Metrics {
  long tp = 0;
  long fp = 0;
  long fn = 0;
  long tn = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double threshold = 0.5;
};

/// 2PR / (P + R), or 0 when P + R == 0.
double f1_score(double precision, double recall);

/// Derives precision, recall and F1 from confusion counts; each ratio is 0
/// when its denominator is 0.
Metrics metrics_from_counts(long tp, long fp, long fn, long tn, double threshold = 0.5);

/// A sample is predicted positive when its score is strictly above the
/// threshold.
Metrics score_metrics(std::span<const double> scores, std::span<const std::uint8_t> labels,
                      double threshold = 0.5);

struct PRPoint {
  double threshold = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};

/// One point per distinct score, ascending. At threshold t a sample is
/// predicted positive when score >= t.
using PRCurve = std::vector<PRPoint>;
PRCurve pr_curve(std::span<const double> scores, std::span<const std::uint8_t> labels);

struct DistanceBand {
  double lo = 0.0;
  double hi = 0.0;
};

/// [0,5), [5,10), [10,15) scaled to the given radius in equal thirds.
std::vector<DistanceBand> default_bands(double radius = 15.0);

struct BandRecall {
  DistanceBand band;
  long positives = 0;
  long detected = 0;
  double recall = 0.0;  // 0 when the band holds no positives
};

struct DistanceBandReport {
  std::vector<BandRecall> rows;
  /// Positives whose distance falls in no band, by sample index.
  std::vector<std::size_t> unassigned;
};

/// Recall among positives, bucketed by distance. Bands must be sorted,
/// non-empty and pairwise disjoint.
DistanceBandReport distance_stratified_recall(std::span<const std::uint8_t> predictions,
                                              std::span<const std::uint8_t> labels,
                                              std::span<const double> distances,
                                              std::span<const DistanceBand> bands);

class MetricsError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace opbil

#endif  // OPBIL_METRICS_HPP
