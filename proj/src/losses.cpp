#include "losses.hpp"

#include <array>
#include <cmath>

#include "error.hpp"
#include "metrics.hpp"
#include "ops.hpp"

namespace rainnas::train {

namespace {
constexpr std::size_t L = verify::kNumLevels;

double sigmoid(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

// s[k] = sigmoid((y - t_{k+1}) / tau) for the four finite thresholds.
std::array<double, L - 1> cuts(double y, double tau) {
    std::array<double, L - 1> s{};
    for (std::size_t k = 0; k < L - 1; ++k) s[k] = sigmoid((y - verify::kLevelThresholds[k]) / tau);
    return s;
}

std::array<double, L> probs_from_cuts(const std::array<double, L - 1>& s) {
    return {1.0 - s[0], s[0] - s[1], s[1] - s[2], s[2] - s[3], s[3]};
}

// d P(l) / dy for every level.
std::array<double, L> dprobs(const std::array<double, L - 1>& s, double tau) {
    std::array<double, L - 1> ds{};
    for (std::size_t k = 0; k < L - 1; ++k) ds[k] = s[k] * (1.0 - s[k]) / tau;
    return {-ds[0], ds[0] - ds[1], ds[1] - ds[2], ds[2] - ds[3], ds[3]};
}
}  // namespace

Tensor soft_level_probs(const Tensor& y_mm, double tau) {
    require(tau > 0.0, "soft_level_probs: temperature must be positive");
    require(y_mm.rank() < 4, "soft_level_probs: input rank must be below 4");
    const std::size_t n = y_mm.numel();
    std::vector<double> out(n * L);
    auto y = y_mm.data();
    for (std::size_t i = 0; i < n; ++i) {
        auto p = probs_from_cuts(cuts(y[i], tau));
        for (std::size_t l = 0; l < L; ++l) out[i * L + l] = p[l];
    }
    auto shape = y_mm.shape();
    shape.push_back(L);
    return Tensor::make_result(
        std::move(shape), std::move(out), {y_mm},
        [tau](grad::Node& self) {
            auto& x = *self.inputs[0];
            auto& gx = x.grad_buffer();
            for (std::size_t i = 0; i < x.data.size(); ++i) {
                auto d = dprobs(cuts(x.data[i], tau), tau);
                double acc = 0;
                for (std::size_t l = 0; l < L; ++l) acc += self.grad[i * L + l] * d[l];
                gx[i] += acc;
            }
        },
        "soft_level_probs");
}

Tensor soft_hss(const Tensor& pred_mm, const Tensor& obs_mm, double tau, bool* degenerate) {
    require(tau > 0.0, "soft_hss: temperature must be positive");
    if (pred_mm.shape() != obs_mm.shape())
        fail(ErrorKind::InvalidArgument,
             "soft_hss: prediction " + pred_mm.shape_string() + " vs observation " + obs_mm.shape_string());
    const std::size_t n = pred_mm.numel();
    require(n > 0, "soft_hss: empty input");
    if (degenerate) *degenerate = false;

    auto y = pred_mm.data();
    std::vector<std::size_t> obs_level(n);
    std::array<double, L> observed{}, predicted{};
    double hits = 0;
    for (std::size_t p = 0; p < n; ++p) {
        obs_level[p] = static_cast<std::size_t>(verify::classify(obs_mm[p]));
        observed[obs_level[p]] += 1.0;
        auto pr = probs_from_cuts(cuts(y[p], tau));
        for (std::size_t j = 0; j < L; ++j) predicted[j] += pr[j];
        hits += pr[obs_level[p]];
    }
    const double nt = static_cast<double>(n);
    const double a = hits / nt;
    double e = 0;
    for (std::size_t i = 0; i < L; ++i) e += observed[i] * predicted[i];
    e /= nt * nt;
    const double denom = 1.0 - e;
    if (std::abs(denom) < 1e-15) {
        if (degenerate) *degenerate = true;
        return Tensor::scalar(kHssEpsilon);
    }
    const double value = (a - e) / denom;
    // dH/dA = 1/(1-E), dH/dE = (A-1)/(1-E)^2, dA/dP[p][j] = [j = o_p]/N_T,
    // dE/dP[p][j] = O_j/N_T^2.
    const double dh_da = 1.0 / denom;
    const double dh_de = (a - 1.0) / (denom * denom);
    return Tensor::make_result(
        {}, {value}, {pred_mm},
        [tau, nt, dh_da, dh_de, observed, obs_level = std::move(obs_level)](grad::Node& self) {
            auto& x = *self.inputs[0];
            auto& gx = x.grad_buffer();
            const double g = self.grad[0];
            for (std::size_t p = 0; p < x.data.size(); ++p) {
                auto d = dprobs(cuts(x.data[p], tau), tau);
                double acc = 0;
                for (std::size_t j = 0; j < L; ++j) {
                    const double dh_dp = (j == obs_level[p] ? dh_da / nt : 0.0) + dh_de * observed[j] / (nt * nt);
                    acc += dh_dp * d[j];
                }
                gx[p] += g * acc;
            }
        },
        "soft_hss");
}

Tensor composite_loss(const Tensor& pred_mm, const Tensor& obs_mm, double c_h, double eps, double tau,
                      bool* degenerate) {
    require(c_h >= 0.0, "composite_loss: c_H must be non-negative");
    require(eps > 0.0, "composite_loss: epsilon must be positive");
    auto mse = grad::mse_loss(pred_mm, obs_mm);
    if (degenerate) *degenerate = false;
    if (c_h == 0.0) return mse;
    auto hss = soft_hss(pred_mm, obs_mm, tau, degenerate);
    return grad::add(mse, grad::scale(grad::reciprocal(grad::clamp_min(hss, eps)), c_h));
}

}  // namespace rainnas::train
