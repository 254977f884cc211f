#include "meteocast/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "meteocast/errors.hpp"

namespace meteo {

Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f,
                                  const Tensor& x, double h) {
  if (!(h > 0.0)) throw NumericError("finite_difference_gradient: step must be positive");
  Tensor grad(x.shape());
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = x.at(i);
    probe.at(i) = xi + h;
    const double fp = f(probe);
    probe.at(i) = xi - h;
    const double fm = f(probe);
    probe.at(i) = xi;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericError("finite_difference_gradient: non-finite evaluation at coordinate " +
                         std::to_string(i));
    }
    grad.at(i) = (fp - fm) / (2.0 * h);
  }
  return grad;
}

double max_relative_error(const Tensor& a, const Tensor& b, double floor) {
  if (!a.same_shape(b)) {
    throw ShapeError("max_relative_error: shape mismatch " + a.shape_str() + " vs " +
                     b.shape_str());
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::abs(a.at(i)), std::abs(b.at(i)), floor});
    worst = std::max(worst, std::abs(a.at(i) - b.at(i)) / denom);
  }
  return worst;
}

}  // namespace meteo
