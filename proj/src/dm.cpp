#include "dm.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "error.hpp"

namespace rainnas::stats {

double normal_cdf(double z) {
    require(std::isfinite(z), "normal_cdf: argument must be finite");
    return 0.5 * std::erfc(-z / std::sqrt(2.0));
}

DmResult dm_test(std::span<const double> loss_a, std::span<const double> loss_b, std::size_t horizon) {
    require(loss_a.size() == loss_b.size(), "dm_test: loss series lengths differ (" + std::to_string(loss_a.size()) +
                                                " vs " + std::to_string(loss_b.size()) + ")");
    const std::size_t n = loss_a.size();
    require(n >= 3, "dm_test: need at least 3 paired losses");
    require(horizon >= 1 && horizon < n, "dm_test: horizon must be in [1, T)");
    std::vector<double> d(n);
    double mean = 0, sq = 0;
    for (std::size_t t = 0; t < n; ++t) {
        require(std::isfinite(loss_a[t]) && std::isfinite(loss_b[t]), "dm_test: non-finite loss value");
        d[t] = loss_a[t] - loss_b[t];
        mean += d[t];
        sq += d[t] * d[t];
    }
    mean /= static_cast<double>(n);
    auto autocov = [&](std::size_t k) {
        double s = 0;
        for (std::size_t t = k; t < n; ++t) s += (d[t] - mean) * (d[t - k] - mean);
        return s / static_cast<double>(n);
    };
    const double gamma0 = autocov(0);
    // Rounding in loss_a - loss_b leaves residual variance near 1e-32 * mean(d^2)
    // for a constant differential.
    if (sq == 0.0 || gamma0 <= 1e-20 * sq / static_cast<double>(n))
        fail(ErrorKind::Numeric, "dm_test: degenerate differential (zero variance)");
    double var = gamma0;
    for (std::size_t k = 1; k < horizon; ++k) var += 2.0 * autocov(k);
    if (!(var > 0.0)) fail(ErrorKind::Numeric, "dm_test: non-positive long-run variance");
    DmResult r;
    r.statistic = mean / std::sqrt(var / static_cast<double>(n));
    r.prob = normal_cdf(r.statistic);
    return r;
}

}  // namespace rainnas::stats
