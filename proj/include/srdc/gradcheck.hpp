#pragma once

// Central finite-difference gradient checking. The analytic side is
// whatever the caller provides (usually Graph::backward); the numeric side
// is evaluated here, independently, so the check stays an oracle.

#include <cmath>
#include <functional>
#include <vector>

#include "srdc/errors.hpp"

namespace srdc {

using ScalarFn = std::function<double(const std::vector<double>&)>;
using GradFn = std::function<std::vector<double>(const std::vector<double>&)>;

// Max over coordinates of |analytic - central| / max(1, |central|),
// with central = (f(x + h e_i) - f(x - h e_i)) / (2h).
inline double grad_check(const ScalarFn& f, const GradFn& analytic_grad,
                         std::vector<double> point, double step) {
    const std::vector<double> analytic = analytic_grad(point);
    if (analytic.size() != point.size())
        throw NumericError("grad_check: gradient size does not match point");
    double worst = 0.0;
    for (std::size_t i = 0; i < point.size(); ++i) {
        const double saved = point[i];
        point[i] = saved + step;
        const double f_plus = f(point);
        point[i] = saved - step;
        const double f_minus = f(point);
        point[i] = saved;
        if (!std::isfinite(f_plus) || !std::isfinite(f_minus))
            throw NumericError("grad_check: non-finite evaluation");
        const double central = (f_plus - f_minus) / (2.0 * step);
        const double denom = std::fabs(central) > 1.0 ? std::fabs(central) : 1.0;
        const double err = std::fabs(analytic[i] - central) / denom;
        if (err > worst) worst = err;
    }
    return worst;
}

}  // namespace srdc
