#include "ssmg/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "ssmg/error.hpp"

namespace ssmg {

GradCheckResult grad_check(const std::function<Tensor<double>()>& f, const std::vector<Tensor<double>>& inputs,
                           double h) {
    if (!(h > 0.0 && h <= 1e-3)) throw ArgumentError("grad_check: step must lie in (0, 1e-3]");

    std::vector<bool> previous_flags;
    for (const auto& x : inputs) {
        previous_flags.push_back(x.requires_grad());
        x.set_requires_grad(true);
        x.drop_grad();
    }

    std::vector<std::vector<double>> analytic;
    {
        Tape<double> tape;
        TapeScope<double> scope(tape);
        auto loss = f();
        tape.backward(loss);
        for (const auto& x : inputs) {
            auto g = x.has_grad() ? x.grad() : std::span<const double>{};
            std::vector<double> copy(x.size(), 0.0);
            std::copy(g.begin(), g.end(), copy.begin());
            analytic.push_back(std::move(copy));
        }
    }

    GradCheckResult result;
    NoGradScope<double> no_grad;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        auto values = inputs[k].mutable_data();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double saved = values[i];
            values[i] = saved + h;
            const double up = f().item();
            values[i] = saved - h;
            const double down = f().item();
            values[i] = saved;
            const double numeric = (up - down) / (2.0 * h);
            const double a = analytic[k][i];
            const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
            const double err = std::abs(a - numeric) / denom;
            if (err > result.max_relative_error) {
                result = {err, k, i, a, numeric};
            }
        }
    }

    for (std::size_t k = 0; k < inputs.size(); ++k) {
        inputs[k].set_requires_grad(previous_flags[k]);
        inputs[k].drop_grad();
    }
    return result;
}

double grad_check(const std::function<Tensor<double>(const Tensor<double>&)>& f, const Tensor<double>& x,
                  double h) {
    return grad_check([&] { return f(x); }, std::vector<Tensor<double>>{x}, h).max_relative_error;
}

}  // namespace ssmg
