#pragma once

// Differentiable tensor operations used by the supernet. Layouts are NCHW;
// no implicit broadcasting beyond bias and per-channel affine terms.

#include <cstddef>

#include "tensor.hpp"

namespace rainnas::grad {

// Cross-correlation (no kernel flip). weight is [Cout, Cin, kh, kw]; bias may
// be undefined for a bias-free convolution.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t padding);

enum class NormMode { Train, Eval };

struct BatchNormStats {
    Tensor running_mean;  // [C]
    Tensor running_var;   // [C], unbiased estimate
    double momentum = 0.1;

    static BatchNormStats fresh(std::size_t channels);
};

// In Train mode normalizes by batch statistics and, when update_running is set,
// folds them into `stats`; Eval mode uses the running statistics.
Tensor batchnorm2d(const Tensor& input, const Tensor& gamma, const Tensor& beta, BatchNormStats& stats,
                   NormMode mode, double eps = 1e-5, bool update_running = true);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);

// Output extent floor((H - k) / stride) + 1. Backward routes to the first
// maximal element in row-major order.
Tensor maxpool2d(const Tensor& x, std::size_t kernel, std::size_t stride);

// Bin (i, j) averages rows [floor(i*H/oh), ceil((i+1)*H/oh)) and likewise for columns.
Tensor adaptive_avgpool2d(const Tensor& x, std::size_t out_h, std::size_t out_w);

// input [N, D] x weight [D, E] + bias [E].
Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul_elem(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor reciprocal(const Tensor& a);
Tensor clamp_min(const Tensor& a, double floor);
Tensor mean_all(const Tensor& a);
Tensor sum_all(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);

// [N, C, H, W] -> [N, 2, H, W]: channel 0 is the mean over C, channel 1 the max.
Tensor channel_mean_max(const Tensor& x);

// x [N, C, H, W] times mask [N, 1, H, W], the mask shared across channels.
Tensor mul_channel_broadcast(const Tensor& x, const Tensor& mask);

Tensor mse_loss(const Tensor& pred, const Tensor& target);

}  // namespace rainnas::grad
