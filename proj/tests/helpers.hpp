#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "asfs/matrix.hpp"

namespace asfs_test {

// Central finite differences over a flat list of mutable parameter views.
// `loss` re-evaluates the scalar objective at the current parameter values,
// so the analytic gradient being checked must come from an independent code
// path. Returns the worst relative error across all coordinates. The 1e-6
// denominator floor makes the comparison absolute for gradients below the
// round-off resolution of central differences at the default step.
inline double gradient_check(const std::vector<std::span<double>>& params,
                             const std::vector<std::span<const double>>& analytic,
                             const std::function<double()>& loss, double step = 1e-5) {
    double worst = 0.0;
    for (std::size_t t = 0; t < params.size(); ++t) {
        for (std::size_t i = 0; i < params[t].size(); ++i) {
            const double saved = params[t][i];
            params[t][i] = saved + step;
            const double up = loss();
            params[t][i] = saved - step;
            const double down = loss();
            params[t][i] = saved;
            const double numeric = (up - down) / (2.0 * step);
            const double denom = std::max({std::abs(numeric), std::abs(analytic[t][i]), 1e-6});
            worst = std::max(worst, std::abs(numeric - analytic[t][i]) / denom);
        }
    }
    return worst;
}

inline double gradient_check_matrix(asfs::Matrix& point, const asfs::Matrix& analytic,
                                    const std::function<double()>& loss, double step = 1e-5) {
    std::vector<std::span<double>> params{std::span<double>(point.data)};
    std::vector<std::span<const double>> grads{std::span<const double>(analytic.data)};
    return gradient_check(params, grads, loss, step);
}

// Two-sample Kolmogorov-Smirnov statistic.
inline double ks_statistic(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    double stat = 0.0;
    std::size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        if (a[i] <= b[j]) ++i;
        else ++j;
        const double fa = static_cast<double>(i) / static_cast<double>(a.size());
        const double fb = static_cast<double>(j) / static_cast<double>(b.size());
        stat = std::max(stat, std::abs(fa - fb));
    }
    return stat;
}

} // namespace asfs_test
