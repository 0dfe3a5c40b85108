#include "opbil/late_fusion.hpp"

#include <iostream>
#include <string>

namespace opbil {
namespace {

void check_unit(double value, const char* what) {
  if (!(value >= 0.0 && value <= 1.0))
    throw ConfidenceError(std::string(what) + " must lie in [0, 1], got " + std::to_string(value));
}

}  // namespace

double average_fusion(double conf_visual, double conf_seismic) {
  check_unit(conf_visual, "visual confidence");
  check_unit(conf_seismic, "seismic confidence");
  return 0.5 * (conf_visual + conf_seismic);
}

MassFunction masses_from_confidence(double confidence, double uncertainty) {
  check_unit(confidence, "confidence");
  check_unit(uncertainty, "uncertainty");
  return {confidence * (1.0 - uncertainty), (1.0 - confidence) * (1.0 - uncertainty), uncertainty};
}

DempsterResult dempster_shafer_combine(double conf_visual, double u_visual, double conf_seismic,
                                       double u_seismic) {
  const MassFunction a = masses_from_confidence(conf_visual, u_visual);
  const MassFunction b = masses_from_confidence(conf_seismic, u_seismic);

  DempsterResult r;
  r.conflict = a.positive * b.negative + a.negative * b.positive;
  const double norm = 1.0 - r.conflict;
  if (norm <= 0.0) {
    r.total_conflict = true;
    r.pignistic = 0.5;
    return r;
  }
  r.combined.positive =
      (a.positive * b.positive + a.positive * b.ignorance + a.ignorance * b.positive) / norm;
  r.combined.negative =
      (a.negative * b.negative + a.negative * b.ignorance + a.ignorance * b.negative) / norm;
  r.combined.ignorance = a.ignorance * b.ignorance / norm;
  r.pignistic = r.combined.positive + 0.5 * r.combined.ignorance;
  return r;
}

double dempster_shafer_fuse(double conf_visual, double u_visual, double conf_seismic,
                            double u_seismic) {
  const DempsterResult r = dempster_shafer_combine(conf_visual, u_visual, conf_seismic, u_seismic);
  if (r.total_conflict)
    std::cerr << "warning: total conflict between modalities, fused score set to 0.5\n";
  return r.pignistic;
}

}  // namespace opbil
