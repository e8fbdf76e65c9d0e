#pragma once

// Test-only helpers: random tensors and a central finite-difference oracle
// that is independent of the backward implementations it checks.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "ops.hpp"
#include "random.hpp"
#include "tensor.hpp"

namespace testutil {

using rainnas::Rng;
using rainnas::grad::Shape;
using rainnas::grad::Tensor;

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0, bool requires_grad = false) {
    std::vector<double> v(rainnas::grad::numel_of(shape));
    for (auto& x : v) x = rainnas::uniform(rng, lo, hi);
    return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

// Reduces an arbitrary tensor to a scalar with fixed random weights so that
// every output element contributes a distinct sensitivity.
inline Tensor weighted_sum(const Tensor& out, std::uint64_t seed = 99) {
    Rng rng(seed);
    auto w = random_tensor(out.shape(), rng, -1.0, 1.0);
    return rainnas::grad::sum_all(rainnas::grad::mul_elem(out, w));
}

struct GradCheckResult {
    bool ok = true;
    double worst_abs = 0;
    std::string detail;
};

// Compares backward() gradients of `loss_fn` w.r.t. `leaves` against central
// differences with step h. Passes when |analytic - numeric| is within
// rel_tol * max(|analytic|, |numeric|) or abs_floor.
inline GradCheckResult grad_check(const std::function<Tensor()>& loss_fn, std::vector<Tensor> leaves,
                                  double h = 1e-5, double rel_tol = 1e-4, double abs_floor = 1e-7) {
    for (auto& t : leaves) t.zero_grad();
    rainnas::grad::backward(loss_fn());
    std::vector<std::vector<double>> analytic;
    for (auto& t : leaves) {
        if (t.has_grad())
            analytic.emplace_back(t.grad().begin(), t.grad().end());
        else
            analytic.emplace_back(t.numel(), 0.0);
    }
    GradCheckResult res;
    rainnas::grad::NoGradGuard guard;
    for (std::size_t li = 0; li < leaves.size(); ++li) {
        auto data = leaves[li].mutable_data();
        for (std::size_t i = 0; i < data.size(); ++i) {
            const double orig = data[i];
            data[i] = orig + h;
            const double up = loss_fn().item();
            data[i] = orig - h;
            const double down = loss_fn().item();
            data[i] = orig;
            const double numeric = (up - down) / (2 * h);
            const double a = analytic[li][i];
            const double err = std::abs(a - numeric);
            const double tol = std::max(rel_tol * std::max(std::abs(a), std::abs(numeric)), abs_floor);
            res.worst_abs = std::max(res.worst_abs, err);
            if (err > tol && res.ok) {
                res.ok = false;
                res.detail = "leaf " + std::to_string(li) + " index " + std::to_string(i) + ": analytic " +
                             std::to_string(a) + " numeric " + std::to_string(numeric);
            }
        }
    }
    return res;
}

// Six nested loops, no im2col.
inline std::vector<double> naive_conv2d(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride,
                                        std::size_t pad) {
    const std::size_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const std::size_t cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    const std::size_t ho = (h + 2 * pad - kh) / stride + 1, wo = (wd + 2 * pad - kw) / stride + 1;
    std::vector<double> out(n * cout * ho * wo);
    for (std::size_t s = 0; s < n; ++s)
        for (std::size_t co = 0; co < cout; ++co)
            for (std::size_t i = 0; i < ho; ++i)
                for (std::size_t j = 0; j < wo; ++j) {
                    double acc = b.defined() ? b[co] : 0.0;
                    for (std::size_t ci = 0; ci < cin; ++ci)
                        for (std::size_t a = 0; a < kh; ++a)
                            for (std::size_t c = 0; c < kw; ++c) {
                                const long ii = static_cast<long>(i * stride + a) - static_cast<long>(pad);
                                const long jj = static_cast<long>(j * stride + c) - static_cast<long>(pad);
                                if (ii < 0 || jj < 0 || ii >= static_cast<long>(h) || jj >= static_cast<long>(wd))
                                    continue;
                                acc += x[((s * cin + ci) * h + ii) * wd + jj] * w[((co * cin + ci) * kh + a) * kw + c];
                            }
                    out[((s * cout + co) * ho + i) * wo + j] = acc;
                }
    return out;
}

}  // namespace testutil
