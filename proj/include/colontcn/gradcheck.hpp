#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "colontcn/seq.hpp"

namespace ctcn {

// Central-difference check for a scalar-valued map. `f` evaluates the map at
// a point; `analytic` is the gradient being verified. Returns the maximum
// over coordinates of |analytic - fd| / max(1, |analytic|).
inline double grad_check(const std::function<double(const std::vector<double>&)>& f,
                         std::vector<double> point, const std::vector<double>& analytic,
                         double eps = 1e-5) {
    require(eps > 0.0, "grad_check: eps must be positive");
    require(point.size() == analytic.size(), "grad_check: gradient size mismatch");
    double worst = 0.0;
    for (std::size_t i = 0; i < point.size(); ++i) {
        const double saved = point[i];
        point[i] = saved + eps;
        const double fp = f(point);
        point[i] = saved - eps;
        const double fm = f(point);
        point[i] = saved;
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw NumericError("grad_check: non-finite evaluation");
        const double fd = (fp - fm) / (2.0 * eps);
        const double err = std::fabs(analytic[i] - fd) / std::max(1.0, std::fabs(analytic[i]));
        worst = std::max(worst, err);
    }
    return worst;
}

}  // namespace ctcn
