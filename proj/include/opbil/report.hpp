#ifndef OPBIL_REPORT_HPP
#define OPBIL_REPORT_HPP

#include "opbil/metrics.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace opbil {

class ReportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ModelMetrics {
  std::string model;
  Metrics metrics;
};

struct ModelCurve {
  std::string model;
  PRCurve curve;
};

struct ModelBands {
  std::string model;
  DistanceBandReport bands;
};

struct ReportFiles {
  std::filesystem::path metrics_csv;
  std::filesystem::path pr_csv;
  std::filesystem::path pr_svg;
  std::filesystem::path bands_csv;
};

/// Writes metrics.csv (model,recall,precision,f1), pr_points.csv,
/// pr_curve.svg and distance_bands.csv into `dir`. Rows keep input order.
ReportFiles export_report(const std::vector<ModelMetrics>& metrics,
                          const std::vector<ModelCurve>& curves,
                          const std::vector<ModelBands>& bands, const std::filesystem::path& dir);

std::string metrics_csv(const std::vector<ModelMetrics>& metrics);
std::string pr_points_csv(const std::vector<ModelCurve>& curves);
std::string bands_csv(const std::vector<ModelBands>& bands);
std::string pr_svg(const std::vector<ModelCurve>& curves);

/// Fixed-width text table in the same column order as metrics.csv.
std::string metrics_table(const std::vector<ModelMetrics>& metrics);

}  // namespace opbil

#endif  // OPBIL_REPORT_HPP
