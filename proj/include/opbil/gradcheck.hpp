#ifndef OPBIL_GRADCHECK_HPP
#define OPBIL_GRADCHECK_HPP

#include "opbil/tape.hpp"

#include <functional>
#include <vector>

namespace opbil {

/// Scalar function of a tensor. When `gradient` is non-null it must be filled
/// with the analytic gradient at `point`.
using ValueAndGradient = std::function<double(const Tensor& point, Tensor* gradient)>;

/// Central differences at eps = 1e-5 carry roughly 1e-11 * |f| of roundoff, so
/// entries far below this floor are compared in absolute terms.
inline constexpr double kRelativeFloor = 1e-6;

struct GradCheckResult {
  /// max_i |analytic_i - numeric_i| / max(kRelativeFloor, |numeric_i|, |analytic_i|)
  double max_rel_error = 0.0;
  Index worst_index = -1;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
  /// Coordinates where f(x +- eps) was not finite; they count as failures.
  std::vector<Index> non_finite;

  bool passed(double tolerance) const {
    return non_finite.empty() && max_rel_error < tolerance;
  }
};

/// Compares the analytic gradient against central differences coordinate by
/// coordinate.
GradCheckResult finite_difference_check(const ValueAndGradient& f, const Tensor& point,
                                        double epsilon = 1e-5);

/// Same check for a function written against the tape: `build` receives a
/// leaf holding the point and returns a scalar node.
GradCheckResult finite_difference_check(const std::function<Var(Var)>& build,
                                        const Tensor& point, double epsilon = 1e-5);

}  // namespace opbil

#endif  // OPBIL_GRADCHECK_HPP
