#include "opbil/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace opbil {

GradCheckResult finite_difference_check(const ValueAndGradient& f, const Tensor& point,
                                        double epsilon) {
  Tensor analytic(point.shape());
  f(point, &analytic);

  GradCheckResult result;
  Tensor probe = point;
  for (Index i = 0; i < point.size(); ++i) {
    const double x0 = point[i];
    probe[i] = x0 + epsilon;
    const double up = f(probe, nullptr);
    probe[i] = x0 - epsilon;
    const double down = f(probe, nullptr);
    probe[i] = x0;

    if (!std::isfinite(up) || !std::isfinite(down)) {
      result.non_finite.push_back(i);
      continue;
    }
    const double numeric = (up - down) / (2.0 * epsilon);
    const double scale = std::max({kRelativeFloor, std::abs(numeric), std::abs(analytic[i])});
    const double err = std::abs(analytic[i] - numeric) / scale;
    if (err > result.max_rel_error || result.worst_index < 0) {
      result.max_rel_error = std::max(result.max_rel_error, err);
      result.worst_index = i;
      result.analytic_at_worst = analytic[i];
      result.numeric_at_worst = numeric;
    }
  }
  return result;
}

GradCheckResult finite_difference_check(const std::function<Var(Var)>& build, const Tensor& point,
                                        double epsilon) {
  return finite_difference_check(
      [&build](const Tensor& x, Tensor* gradient) {
        Tape tape;
        Var leaf = tape.variable(x);
        Var out = build(leaf);
        if (gradient) {
          tape.backward(out);
          const Tensor& g = leaf.grad();
          if (g.empty())
            gradient->data().setZero();
          else
            *gradient = g;
        }
        return out.value()[0];
      },
      point, epsilon);
}

}  // namespace opbil
