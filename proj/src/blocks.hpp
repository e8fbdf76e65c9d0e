#pragma once

// Candidate operations of the search space. Every op maps [N, F, H, W] to
// [N, F, H, W] so that any of them can fill any block of the backbone.

#include <array>
#include <string>
#include <string_view>

#include "ops.hpp"
#include "tensor.hpp"

namespace rainnas::nas {

using grad::Tensor;

enum class OpKind { RB = 0, SAB = 1, CAB = 2 };

inline constexpr std::size_t kNumOps = 3;
inline constexpr std::array<OpKind, kNumOps> kAllOps{OpKind::RB, OpKind::SAB, OpKind::CAB};

std::string_view op_name(OpKind op);
OpKind parse_op(std::string_view name);  // throws on unknown names

inline constexpr double kDefaultCabLambda = 1e-4;

// Energy-based attention, computed independently for every (sample, channel)
// plane with n = H*W - 1:
//   z' = z * sigmoid((z - mean)^2 / (4 * (sum((z - mean)^2) / n + lambda)) + 0.5)
Tensor cab_forward(const Tensor& z, double lambda = kDefaultCabLambda);

// The attention factor alone, without the multiplication by z. Used by tests
// and diagnostics; not differentiable.
std::vector<double> cab_weights(const Tensor& z, double lambda = kDefaultCabLambda);

struct ForwardMode {
    grad::NormMode norm = grad::NormMode::Train;
    bool update_running = true;
};

struct ConvBn {
    Tensor weight;  // [F, F, 3, 3], no bias (batchnorm absorbs it)
    Tensor gamma, beta;
    grad::BatchNormStats stats;
};

struct ResidualParams {
    ConvBn first, second;
};

struct SpatialParams {
    Tensor weight;  // [1, 2, 7, 7] over the (mean, max) channel-pooled map
    Tensor bias;    // [1]
};

// relu(z + bn(conv(relu(bn(conv(z)))))), identity skip.
Tensor rb_forward(const Tensor& z, ResidualParams& params, ForwardMode mode);

// z * sigmoid(conv7x7(concat(mean_c(z), max_c(z)))), mask broadcast over channels.
Tensor sab_forward(const Tensor& z, const SpatialParams& params);

}  // namespace rainnas::nas
