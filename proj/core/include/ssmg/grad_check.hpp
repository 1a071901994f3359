#pragma once

#include <functional>
#include <vector>

#include "ssmg/tensor.hpp"

namespace ssmg {

struct GradCheckResult {
    double max_relative_error = 0.0;
    std::size_t worst_input = 0;
    std::size_t worst_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
};

// Compares the taped gradient of a scalar function against central differences
// (f(x+h) - f(x-h)) / 2h, coordinate by coordinate, for every tensor in `inputs`.
// Relative error uses the denominator max(|a|, |b|, 1e-8).
GradCheckResult grad_check(const std::function<Tensor<double>()>& f, const std::vector<Tensor<double>>& inputs,
                           double h = 1e-5);

// Single-input form: f is called with x.
double grad_check(const std::function<Tensor<double>(const Tensor<double>&)>& f, const Tensor<double>& x,
                  double h = 1e-5);

}  // namespace ssmg
