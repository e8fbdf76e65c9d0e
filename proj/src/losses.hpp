#pragma once

// Supervised training objectives: MSE plus a chance-corrected categorical
// term made differentiable by sigmoid soft-binning.

#include "tensor.hpp"

namespace rainnas::train {

using grad::Tensor;

inline constexpr double kHssEpsilon = 1e-10;
inline constexpr double kDefaultTau = 0.5;

// Appends a trailing axis of 5 level probabilities:
//   P(l) = sigmoid((y - t_l) / tau) - sigmoid((y - t_{l+1}) / tau)
// with t_0 = -inf, t_5 = +inf and t_1..t_4 the level thresholds.
Tensor soft_level_probs(const Tensor& y_mm, double tau);

// HSS of the expected contingency table n[i][j] = sum over pixels with
// observed level i of P(pred = j). Observations are binned hard and carry no
// gradient. On a zero denominator returns the constant kHssEpsilon and sets
// *degenerate.
Tensor soft_hss(const Tensor& pred_mm, const Tensor& obs_mm, double tau, bool* degenerate = nullptr);

// mse + c_h / max(soft_hss, eps). With c_h == 0 this is exactly mse_loss.
Tensor composite_loss(const Tensor& pred_mm, const Tensor& obs_mm, double c_h, double eps = kHssEpsilon,
                      double tau = kDefaultTau, bool* degenerate = nullptr);

}  // namespace rainnas::train
