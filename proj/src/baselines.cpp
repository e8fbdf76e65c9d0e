#include "baselines.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "error.hpp"

namespace rainnas::baselines {

namespace {
void check_stack(std::span<const double> stack, std::size_t c, std::size_t hw) {
    require(c >= 1, "baseline: need at least one ensemble member");
    require(stack.size() == c * hw, "baseline: stack has " + std::to_string(stack.size()) + " values, expected " +
                                        std::to_string(c) + "x" + std::to_string(hw));
}
}  // namespace

BaselineKind parse_kind(const std::string& name) {
    if (name == "em") return BaselineKind::EM;
    if (name == "pm") return BaselineKind::PM;
    if (name == "wem") return BaselineKind::WEM;
    fail(ErrorKind::InvalidArgument, "unknown baseline '" + name + "' (expected em, pm or wem)");
}

const char* kind_name(BaselineKind kind) {
    switch (kind) {
        case BaselineKind::EM: return "em";
        case BaselineKind::PM: return "pm";
        case BaselineKind::WEM: return "wem";
    }
    return "?";
}

std::vector<double> ensemble_mean(std::span<const double> stack, std::size_t c, std::size_t hw) {
    check_stack(stack, c, hw);
    std::vector<double> out(hw, 0.0);
    for (std::size_t k = 0; k < c; ++k)
        for (std::size_t q = 0; q < hw; ++q) out[q] += stack[k * hw + q];
    for (auto& v : out) v /= static_cast<double>(c);
    return out;
}

std::vector<double> prob_match(std::span<const double> stack, std::size_t c, std::size_t hw) {
    auto em = ensemble_mean(stack, c, hw);
    std::vector<std::size_t> order(hw);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return em[a] > em[b]; });
    std::vector<double> pooled(stack.begin(), stack.end());
    std::sort(pooled.begin(), pooled.end(), std::greater<>());
    std::vector<double> out(hw);
    // k-th largest EM pixel takes the (c*k + c - 1)-th pooled value, 0-based.
    for (std::size_t k = 0; k < hw; ++k) out[order[k]] = pooled[c * k + c - 1];
    return out;
}

std::vector<double> weighted_em(std::span<const double> stack, std::size_t c, std::size_t hw,
                                std::span<const double> weights) {
    check_stack(stack, c, hw);
    require(weights.size() == c, "weighted_em: " + std::to_string(weights.size()) + " weights for " +
                                     std::to_string(c) + " members");
    double sum = 0;
    for (double w : weights) {
        require(w >= 0.0, "weighted_em: weights must be non-negative");
        sum += w;
    }
    require(std::abs(sum - 1.0) < 1e-9, "weighted_em: weights must sum to 1");
    std::vector<double> out(hw, 0.0);
    for (std::size_t k = 0; k < c; ++k)
        for (std::size_t q = 0; q < hw; ++q) out[q] += weights[k] * stack[k * hw + q];
    return out;
}

std::vector<double> fit_wem_weights(std::span<const data::GridSample> train, std::size_t c) {
    require(!train.empty(), "fit_wem_weights: empty training split");
    std::vector<double> abs_err(c, 0.0);
    std::size_t count = 0;
    for (const auto& s : train) {
        const std::size_t hw = s.observation.size();
        require(s.ensemble.size() == c * hw, "fit_wem_weights: sample '" + s.timestamp + "' has wrong member count");
        for (std::size_t k = 0; k < c; ++k)
            for (std::size_t q = 0; q < hw; ++q)
                abs_err[k] += std::abs(static_cast<double>(s.ensemble[k * hw + q]) - s.observation[q]);
        count += hw;
    }
    std::vector<double> w(c);
    double sum = 0;
    for (std::size_t k = 0; k < c; ++k) {
        const double m = abs_err[k] / static_cast<double>(count);
        w[k] = std::isfinite(m) ? 1.0 / (m + kWemDelta) : 0.0;
        sum += w[k];
    }
    if (!(sum > 0.0)) fail(ErrorKind::Numeric, "fit_wem_weights: every member has infinite error");
    for (auto& v : w) v /= sum;
    return w;
}

}  // namespace rainnas::baselines
