#pragma once

#include <functional>

#include "peca/tensor.hpp"

namespace peca {

using ScalarFn = std::function<double(const Tensor&)>;

// Central-difference gradient (f(x + h e_i) - f(x - h e_i)) / 2h for every
// coordinate of x. f is evaluated twice at x first; differing results raise
// OracleError.
Tensor finite_diff_grad(const ScalarFn& f, const Tensor& x, double step = 1e-4);

// |a - b| / max(|a|, |b|, floor), maximized over coordinates.
double max_relative_error(const Tensor& a, const Tensor& b, double floor = 1e-6);

}  // namespace peca
