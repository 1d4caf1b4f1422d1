#pragma once

#include <cmath>
#include <functional>

#include "cbct/tensor.hpp"

namespace cbct::ad {

// Central finite-difference check of reverse-mode gradients. `f` must rebuild
// its graph from x on every call and return a scalar. Returns
// max_i |analytic_i - numeric_i| / max(1, |analytic_i|).
inline double finite_difference_check(const std::function<TensorD(TensorD&)>& f, TensorD& x,
                                      double step) {
    x.set_requires_grad(true);
    x.zero_grad();
    {
        TensorD y = f(x);
        backward(y);
    }
    std::vector<double> analytic = x.grad();
    if (analytic.empty()) analytic.assign(x.size(), 0.0);
    x.zero_grad();
    double worst = 0.0;
    for (int64_t i = 0; i < x.size(); ++i) {
        const double keep = x.data()[i];
        x.data()[i] = keep + step;
        const double fp = f(x).item();
        x.data()[i] = keep - step;
        const double fm = f(x).item();
        x.data()[i] = keep;
        const double numeric = (fp - fm) / (2.0 * step);
        const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i]));
        worst = std::max(worst, err);
    }
    return worst;
}

}  // namespace cbct::ad
