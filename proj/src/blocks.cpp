#include "blocks.hpp"

#include <cmath>

#include "error.hpp"

namespace rainnas::nas {

namespace {

double logistic(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

struct PlaneStats {
    double mean;
    double denom;  // 4 * (S / n + lambda)
};

PlaneStats plane_stats(const double* z, std::size_t hw, double lambda) {
    double s = 0;
    for (std::size_t q = 0; q < hw; ++q) s += z[q];
    const double mean = s / static_cast<double>(hw);
    double ss = 0;
    for (std::size_t q = 0; q < hw; ++q) ss += (z[q] - mean) * (z[q] - mean);
    const double n = static_cast<double>(hw - 1);
    return {mean, 4.0 * (ss / n + lambda)};
}

void check_cab_input(const Tensor& z, double lambda) {
    if (z.rank() != 4) fail(ErrorKind::InvalidArgument, "cab_forward: expected [N,F,H,W], got " + z.shape_string());
    if (z.dim(2) * z.dim(3) < 2)
        fail(ErrorKind::InvalidArgument, "cab_forward: spatial plane needs at least 2 pixels, got " + z.shape_string());
    require(lambda > 0, "cab_forward: lambda must be positive");
}

}  // namespace

std::string_view op_name(OpKind op) {
    switch (op) {
        case OpKind::RB: return "RB";
        case OpKind::SAB: return "SAB";
        case OpKind::CAB: return "CAB";
    }
    fail(ErrorKind::InvalidArgument, "invalid OpKind");
}

OpKind parse_op(std::string_view name) {
    for (auto op : kAllOps)
        if (op_name(op) == name) return op;
    fail(ErrorKind::Format, "unknown operation '" + std::string(name) + "' (expected RB, SAB or CAB)");
}

std::vector<double> cab_weights(const Tensor& z, double lambda) {
    check_cab_input(z, lambda);
    const std::size_t planes = z.dim(0) * z.dim(1), hw = z.dim(2) * z.dim(3);
    std::vector<double> w(z.numel());
    const double* zd = z.data().data();
    for (std::size_t p = 0; p < planes; ++p) {
        const double* zp = zd + p * hw;
        const auto st = plane_stats(zp, hw, lambda);
        for (std::size_t q = 0; q < hw; ++q) {
            const double d = zp[q] - st.mean;
            w[p * hw + q] = logistic(d * d / st.denom + 0.5);
        }
    }
    return w;
}

Tensor cab_forward(const Tensor& z, double lambda) {
    auto weights = cab_weights(z, lambda);
    const std::size_t planes = z.dim(0) * z.dim(1), hw = z.dim(2) * z.dim(3);
    std::vector<double> out(z.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = z[i] * weights[i];
    return Tensor::make_result(
        z.shape(), std::move(out), {z},
        [planes, hw, lambda, weights = std::move(weights)](grad::Node& self) {
            grad::Node& in = *self.inputs[0];
            double* dz = in.grad_buffer().data();
            const double* zd = in.data.data();
            const double n = static_cast<double>(hw - 1);
            std::vector<double> dd(hw);
            for (std::size_t p = 0; p < planes; ++p) {
                const double* zp = zd + p * hw;
                const double* wp = weights.data() + p * hw;
                const double* gp = self.grad.data() + p * hw;
                const auto st = plane_stats(zp, hw, lambda);
                // a_q = dL/de_q where e_q is the pre-sigmoid energy.
                double weighted = 0;
                for (std::size_t q = 0; q < hw; ++q) {
                    const double d = zp[q] - st.mean;
                    const double a = gp[q] * zp[q] * wp[q] * (1 - wp[q]);
                    weighted += a * d * d;
                    dd[q] = 2.0 * a * d / st.denom;
                }
                const double coupling = weighted / (st.denom * st.denom) * 8.0 / n;
                double dd_mean = 0;
                for (std::size_t q = 0; q < hw; ++q) {
                    dd[q] -= coupling * (zp[q] - st.mean);
                    dd_mean += dd[q];
                }
                dd_mean /= static_cast<double>(hw);
                double* dzp = dz + p * hw;
                for (std::size_t q = 0; q < hw; ++q) dzp[q] += gp[q] * wp[q] + dd[q] - dd_mean;
            }
        },
        "cab");
}

Tensor rb_forward(const Tensor& z, ResidualParams& params, ForwardMode mode) {
    if (z.rank() != 4 || params.first.weight.dim(1) != z.dim(1) || params.second.weight.dim(0) != z.dim(1))
        fail(ErrorKind::InvalidArgument, "rb_forward: input " + z.shape_string() + " does not match block weights " +
                                             params.first.weight.shape_string());
    auto conv_bn = [&](const Tensor& x, ConvBn& p) {
        auto y = grad::conv2d(x, p.weight, Tensor(), 1, p.weight.dim(2) / 2);
        return grad::batchnorm2d(y, p.gamma, p.beta, p.stats, mode.norm, 1e-5, mode.update_running);
    };
    auto h = grad::relu(conv_bn(z, params.first));
    return grad::relu(grad::add(z, conv_bn(h, params.second)));
}

Tensor sab_forward(const Tensor& z, const SpatialParams& params) {
    if (z.rank() != 4 || params.weight.rank() != 4 || params.weight.dim(1) != 2 || params.weight.dim(0) != 1)
        fail(ErrorKind::InvalidArgument, "sab_forward: input " + z.shape_string() + " or weight " +
                                             params.weight.shape_string() + " malformed");
    auto pooled = grad::channel_mean_max(z);
    auto mask = grad::sigmoid(grad::conv2d(pooled, params.weight, params.bias, 1, params.weight.dim(2) / 2));
    return grad::mul_channel_broadcast(z, mask);
}

}  // namespace rainnas::nas
