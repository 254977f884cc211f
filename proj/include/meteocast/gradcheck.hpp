#pragma once

#include <functional>

#include "meteocast/tensor.hpp"

namespace meteo {

/// Central-difference gradient of a scalar function, (f(x+h*e_i) - f(x-h*e_i)) / 2h
/// per coordinate. The independent oracle every analytic gradient in this
/// repository is checked against. Throws NumericError if f evaluates to a
/// non-finite value anywhere on the stencil.
Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f,
                                  const Tensor& x, double h);

/// Worst-coordinate relative error |a_i - b_i| / max(|a_i|, |b_i|, floor).
double max_relative_error(const Tensor& a, const Tensor& b, double floor = 1e-6);

}  // namespace meteo
