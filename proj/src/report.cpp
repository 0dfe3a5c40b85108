#include "opbil/report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

namespace opbil {
namespace {

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ReportError("cannot write " + path.string());
  out << text;
  if (!out) throw ReportError("failed writing " + path.string());
}

constexpr const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

}  // namespace

std::string metrics_csv(const std::vector<ModelMetrics>& metrics) {
  std::string out = "model,recall,precision,f1\n";
  for (const auto& m : metrics)
    out += m.model + "," + fmt("%.6f", m.metrics.recall) + "," + fmt("%.6f", m.metrics.precision) +
           "," + fmt("%.6f", m.metrics.f1) + "\n";
  return out;
}

std::string pr_points_csv(const std::vector<ModelCurve>& curves) {
  std::string out = "model,threshold,precision,recall\n";
  for (const auto& c : curves)
    for (const PRPoint& p : c.curve)
      out += c.model + "," + fmt("%.9g", p.threshold) + "," + fmt("%.9g", p.precision) + "," +
             fmt("%.9g", p.recall) + "\n";
  return out;
}

std::string bands_csv(const std::vector<ModelBands>& bands) {
  std::string out = "model,band_lo,band_hi,positives,detected,recall,unassigned_positives\n";
  for (const auto& b : bands)
    for (const BandRecall& r : b.bands.rows)
      out += b.model + "," + fmt("%g", r.band.lo) + "," + fmt("%g", r.band.hi) + "," +
             std::to_string(r.positives) + "," + std::to_string(r.detected) + "," +
             fmt("%.6f", r.recall) + "," + std::to_string(b.bands.unassigned.size()) + "\n";
  return out;
}

std::string pr_svg(const std::vector<ModelCurve>& curves) {
  const double w = 520, h = 400, left = 60, right = 150, top = 20, bottom = 50;
  const double pw = w - left - right, ph = h - top - bottom;
  auto x = [&](double recall) { return left + recall * pw; };
  auto y = [&](double precision) { return top + (1.0 - precision) * ph; };

  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"520\" height=\"400\" "
                  "font-family=\"sans-serif\" font-size=\"12\">\n";
  s += "<rect width=\"520\" height=\"400\" fill=\"white\"/>\n";
  s += "<rect x=\"" + fmt("%.1f", left) + "\" y=\"" + fmt("%.1f", top) + "\" width=\"" +
       fmt("%.1f", pw) + "\" height=\"" + fmt("%.1f", ph) + "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double v = i / 5.0;
    s += "<text x=\"" + fmt("%.1f", x(v)) + "\" y=\"" + fmt("%.1f", h - bottom + 16) +
         "\" text-anchor=\"middle\">" + fmt("%.1f", v) + "</text>\n";
    s += "<text x=\"" + fmt("%.1f", left - 6) + "\" y=\"" + fmt("%.1f", y(v) + 4) +
         "\" text-anchor=\"end\">" + fmt("%.1f", v) + "</text>\n";
  }
  s += "<text x=\"" + fmt("%.1f", left + pw / 2) + "\" y=\"" + fmt("%.1f", h - 12) +
       "\" text-anchor=\"middle\">Recall</text>\n";
  s += "<text x=\"16\" y=\"" + fmt("%.1f", top + ph / 2) +
       "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " + fmt("%.1f", top + ph / 2) +
       ")\">Precision</text>\n";

  for (std::size_t c = 0; c < curves.size(); ++c) {
    const std::string colour = kPalette[c % std::size(kPalette)];
    std::vector<PRPoint> pts = curves[c].curve;
    std::stable_sort(pts.begin(), pts.end(),
                     [](const PRPoint& a, const PRPoint& b) { return a.recall < b.recall; });
    std::string poly;
    for (const PRPoint& p : pts) poly += fmt("%.2f", x(p.recall)) + "," + fmt("%.2f", y(p.precision)) + " ";
    if (!poly.empty()) poly.pop_back();
    s += "<polyline fill=\"none\" stroke=\"" + colour + "\" stroke-width=\"1.5\" points=\"" + poly +
         "\"/>\n";
    const double ly = top + 14.0 + 18.0 * double(c);
    s += "<line x1=\"" + fmt("%.1f", w - right + 10) + "\" y1=\"" + fmt("%.1f", ly - 4) +
         "\" x2=\"" + fmt("%.1f", w - right + 30) + "\" y2=\"" + fmt("%.1f", ly - 4) +
         "\" stroke=\"" + colour + "\" stroke-width=\"2\"/>\n";
    s += "<text x=\"" + fmt("%.1f", w - right + 36) + "\" y=\"" + fmt("%.1f", ly) + "\">" +
         curves[c].model + "</text>\n";
  }
  s += "</svg>\n";
  return s;
}

std::string metrics_table(const std::vector<ModelMetrics>& metrics) {
  std::size_t width = 5;
  for (const auto& m : metrics) width = std::max(width, m.model.size());
  auto pad = [&](std::string s) { return s + std::string(width - s.size() + 2, ' '); };
  std::string out = pad("Model") + "Recall  Precision  F1\n";
  for (const auto& m : metrics)
    out += pad(m.model) + fmt("%.3f", m.metrics.recall) + "   " + fmt("%.3f", m.metrics.precision) +
           "      " + fmt("%.3f", m.metrics.f1) + "\n";
  return out;
}

ReportFiles export_report(const std::vector<ModelMetrics>& metrics,
                          const std::vector<ModelCurve>& curves,
                          const std::vector<ModelBands>& bands, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ReportError("cannot create " + dir.string() + ": " + ec.message());
  ReportFiles files{dir / "metrics.csv", dir / "pr_points.csv", dir / "pr_curve.svg",
                    dir / "distance_bands.csv"};
  write_file(files.metrics_csv, metrics_csv(metrics));
  write_file(files.pr_csv, pr_points_csv(curves));
  write_file(files.pr_svg, pr_svg(curves));
  write_file(files.bands_csv, bands_csv(bands));
  return files;
}

}  // namespace opbil
