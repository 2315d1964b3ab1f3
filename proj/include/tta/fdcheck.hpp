#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>

#include "tta/tensor.hpp"

// Central finite-difference validation of analytic gradients. The function
// under test receives a fresh tape and a variable leaf at the evaluation
// point and must return a scalar recorded on that tape.

namespace tta {

using ScalarGraphFn = std::function<Tensor(Tape&, const Tensor&)>;

inline double evaluate_scalar(const ScalarGraphFn& f, const Tensor& point) {
    Tape tape;
    Tensor x = tape.variable(point.shape, point.values);
    Tensor out = f(tape, x);
    if (!out.is_scalar()) {
        throw std::invalid_argument("finite_difference_check: f must return a scalar");
    }
    return out.item();
}

// Max over coordinates of |analytic - central| / max(1e-8, |central|).
inline double finite_difference_check(const ScalarGraphFn& f, const Tensor& point, double eps) {
    if (eps <= 0.0) throw std::invalid_argument("finite_difference_check: eps must be positive");
    Tensor analytic;
    {
        Tape tape;
        Tensor x = tape.variable(point.shape, point.values);
        Tensor loss = f(tape, x);
        if (!loss.is_scalar()) {
            throw std::invalid_argument("finite_difference_check: f must return a scalar");
        }
        tape.backward(loss);
        analytic = tape.grad(x);
    }
    double worst = 0.0;
    Tensor probe = point;
    for (std::size_t i = 0; i < point.values.size(); ++i) {
        probe.values[i] = point.values[i] + eps;
        const double hi = evaluate_scalar(f, probe);
        probe.values[i] = point.values[i] - eps;
        const double lo = evaluate_scalar(f, probe);
        probe.values[i] = point.values[i];
        const double central = (hi - lo) / (2.0 * eps);
        const double err =
            std::abs(analytic.values[i] - central) / std::max(1e-8, std::abs(central));
        if (err > worst) worst = err;
    }
    return worst;
}

}  // namespace tta
