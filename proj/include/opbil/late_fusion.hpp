#ifndef OPBIL_LATE_FUSION_HPP
#define OPBIL_LATE_FUSION_HPP

#include <stdexcept>

namespace opbil {

class ConfidenceError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline constexpr double kDecisionThreshold = 0.5;

/// Mean of the two confidences.
double average_fusion(double conf_visual, double conf_seismic);

/// Positive iff score > threshold; a score equal to the threshold is negative.
inline bool decide(double score, double threshold = kDecisionThreshold) {
  return score > threshold;
}

/// Belief masses over {P, N} with the ignorance mass on the whole frame.
struct MassFunction {
  double positive = 0.0;
  double negative = 0.0;
  double ignorance = 0.0;
};

/// m(P) = c(1-u), m(N) = (1-c)(1-u), m(Theta) = u.
MassFunction masses_from_confidence(double confidence, double uncertainty);

struct DempsterResult {
  MassFunction combined;
  double conflict = 0.0;
  double pignistic = 0.5;  // BetP(P) = m(P) + m(Theta) / 2
  bool total_conflict = false;
};

/// Dempster's rule of combination followed by the pignistic transform. Total
/// conflict (K == 1) yields 0.5 and sets total_conflict.
DempsterResult dempster_shafer_combine(double conf_visual, double u_visual, double conf_seismic,
                                       double u_seismic);

/// Pignistic score of the combination; warns on stderr at total conflict.
double dempster_shafer_fuse(double conf_visual, double u_visual, double conf_seismic,
                            double u_seismic);

}  // namespace opbil

#endif  // OPBIL_LATE_FUSION_HPP
