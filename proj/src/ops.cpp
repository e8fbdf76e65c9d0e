#include "ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "error.hpp"

namespace rainnas::grad {

namespace {

// Returns the grad buffer of input k, or nullptr when it takes no gradient.
double* input_grad(Node& self, std::size_t k) {
    Node& in = *self.inputs[k];
    return in.requires_grad ? in.grad_buffer().data() : nullptr;
}

const double* input_data(const Node& self, std::size_t k) { return self.inputs[k]->data.data(); }

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        fail(ErrorKind::InvalidArgument,
             std::string(op) + ": shape mismatch " + a.shape_string() + " vs " + b.shape_string());
}

void require_rank(const Tensor& t, std::size_t r, const char* op, const char* what) {
    if (t.rank() != r)
        fail(ErrorKind::InvalidArgument, std::string(op) + ": " + what + " must have rank " + std::to_string(r) +
                                             ", got " + t.shape_string());
}

double sigmoid_scalar(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

// c[m, n] += a[m, k] * b[k, n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a[i * k + p];
            if (av == 0.0) continue;
            const double* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// c[m, k] += a[m, n] * b[k, n]^T
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t n, std::size_t k) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double* brow = b + p * n;
            double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
            std::size_t j = 0;
            for (; j + 4 <= n; j += 4) {
                s0 += arow[j] * brow[j];
                s1 += arow[j + 1] * brow[j + 1];
                s2 += arow[j + 2] * brow[j + 2];
                s3 += arow[j + 3] * brow[j + 3];
            }
            for (; j < n; ++j) s0 += arow[j] * brow[j];
            c[i * k + p] += (s0 + s1) + (s2 + s3);
        }
    }
}

// c[k, n] += a[m, k]^T * b[m, n]
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* brow = b + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a[i * k + p];
            if (av == 0.0) continue;
            double* crow = c + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

struct ConvGeometry {
    std::size_t cin, h, w, kh, kw, stride, pad, ho, wo;
    std::size_t patch() const { return cin * kh * kw; }
    std::size_t positions() const { return ho * wo; }
};

void im2col(const double* x, const ConvGeometry& g, double* cols) {
    const std::size_t p = g.positions();
    for (std::size_t c = 0; c < g.cin; ++c)
        for (std::size_t ki = 0; ki < g.kh; ++ki)
            for (std::size_t kj = 0; kj < g.kw; ++kj) {
                double* row = cols + ((c * g.kh + ki) * g.kw + kj) * p;
                for (std::size_t oi = 0; oi < g.ho; ++oi) {
                    const long ii = static_cast<long>(oi * g.stride + ki) - static_cast<long>(g.pad);
                    for (std::size_t oj = 0; oj < g.wo; ++oj) {
                        const long jj = static_cast<long>(oj * g.stride + kj) - static_cast<long>(g.pad);
                        const bool inside = ii >= 0 && jj >= 0 && ii < static_cast<long>(g.h) &&
                                            jj < static_cast<long>(g.w);
                        row[oi * g.wo + oj] = inside ? x[(c * g.h + ii) * g.w + jj] : 0.0;
                    }
                }
            }
}

void col2im(const double* cols, const ConvGeometry& g, double* dx) {
    const std::size_t p = g.positions();
    for (std::size_t c = 0; c < g.cin; ++c)
        for (std::size_t ki = 0; ki < g.kh; ++ki)
            for (std::size_t kj = 0; kj < g.kw; ++kj) {
                const double* row = cols + ((c * g.kh + ki) * g.kw + kj) * p;
                for (std::size_t oi = 0; oi < g.ho; ++oi) {
                    const long ii = static_cast<long>(oi * g.stride + ki) - static_cast<long>(g.pad);
                    if (ii < 0 || ii >= static_cast<long>(g.h)) continue;
                    for (std::size_t oj = 0; oj < g.wo; ++oj) {
                        const long jj = static_cast<long>(oj * g.stride + kj) - static_cast<long>(g.pad);
                        if (jj < 0 || jj >= static_cast<long>(g.w)) continue;
                        dx[(c * g.h + ii) * g.w + jj] += row[oi * g.wo + oj];
                    }
                }
            }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t padding) {
    require_rank(input, 4, "conv2d", "input");
    require_rank(weight, 4, "conv2d", "weight");
    const std::size_t n = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
    const std::size_t cout = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
    if (weight.dim(1) != cin)
        fail(ErrorKind::InvalidArgument, "conv2d: input " + input.shape_string() + " has " + std::to_string(cin) +
                                             " channels but weight " + weight.shape_string() + " expects " +
                                             std::to_string(weight.dim(1)));
    require(kh % 2 == 1 && kw % 2 == 1, "conv2d: kernel extents must be odd, got " + weight.shape_string());
    require(stride >= 1, "conv2d: stride must be positive");
    require(h + 2 * padding >= kh && w + 2 * padding >= kw,
            "conv2d: kernel " + weight.shape_string() + " larger than padded input " + input.shape_string());
    require((h + 2 * padding - kh) % stride == 0 && (w + 2 * padding - kw) % stride == 0,
            "conv2d: output extent not integral for input " + input.shape_string() + " and weight " +
                weight.shape_string());
    Tensor b = bias.defined() ? bias : Tensor::zeros({cout});
    if (b.shape() != Shape{cout})
        fail(ErrorKind::InvalidArgument,
             "conv2d: bias " + b.shape_string() + " does not match weight " + weight.shape_string());

    ConvGeometry g{cin, h, w, kh, kw, stride, padding, (h + 2 * padding - kh) / stride + 1,
                   (w + 2 * padding - kw) / stride + 1};
    const std::size_t k = g.patch(), p = g.positions();
    std::vector<double> out(n * cout * p);
    std::vector<double> cols(k * p);
    const double* xd = input.data().data();
    const double* wd = weight.data().data();
    const double* bd = b.data().data();
    for (std::size_t s = 0; s < n; ++s) {
        im2col(xd + s * cin * h * w, g, cols.data());
        double* o = out.data() + s * cout * p;
        for (std::size_t co = 0; co < cout; ++co) std::fill(o + co * p, o + (co + 1) * p, bd[co]);
        gemm_nn(wd, cols.data(), o, cout, k, p);
    }

    return Tensor::make_result(
        {n, cout, g.ho, g.wo}, std::move(out), {input, weight, b},
        [g, n, cout](Node& self) {
            const std::size_t k = g.patch(), p = g.positions();
            const double* x = input_data(self, 0);
            const double* wt = input_data(self, 1);
            double* dx = input_grad(self, 0);
            double* dw = input_grad(self, 1);
            double* db = input_grad(self, 2);
            const double* dy = self.grad.data();
            std::vector<double> cols(k * p);
            for (std::size_t s = 0; s < n; ++s) {
                const double* dys = dy + s * cout * p;
                if (db)
                    for (std::size_t co = 0; co < cout; ++co)
                        for (std::size_t q = 0; q < p; ++q) db[co] += dys[co * p + q];
                if (dw) {
                    im2col(x + s * g.cin * g.h * g.w, g, cols.data());
                    gemm_nt(dys, cols.data(), dw, cout, p, k);
                }
                if (dx) {
                    std::fill(cols.begin(), cols.end(), 0.0);
                    gemm_tn(wt, dys, cols.data(), cout, k, p);
                    col2im(cols.data(), g, dx + s * g.cin * g.h * g.w);
                }
            }
        },
        "conv2d");
}

BatchNormStats BatchNormStats::fresh(std::size_t channels) {
    return {Tensor::zeros({channels}), Tensor::full({channels}, 1.0), 0.1};
}

Tensor batchnorm2d(const Tensor& input, const Tensor& gamma, const Tensor& beta, BatchNormStats& stats,
                   NormMode mode, double eps, bool update_running) {
    require_rank(input, 4, "batchnorm2d", "input");
    const std::size_t n = input.dim(0), c = input.dim(1), hw = input.dim(2) * input.dim(3);
    require(gamma.shape() == Shape{c} && beta.shape() == Shape{c},
            "batchnorm2d: affine shapes " + gamma.shape_string() + "/" + beta.shape_string() +
                " do not match input " + input.shape_string());
    require(stats.running_mean.shape() == Shape{c} && stats.running_var.shape() == Shape{c},
            "batchnorm2d: running statistics do not match input channels");
    require(eps > 0, "batchnorm2d: eps must be positive");
    const std::size_t m = n * hw;
    if (mode == NormMode::Train && m <= 1)
        fail(ErrorKind::InvalidArgument,
             "batchnorm2d: train mode needs more than one value per channel, got " + input.shape_string());

    const double* x = input.data().data();
    const double* gd = gamma.data().data();
    const double* bd = beta.data().data();
    std::vector<double> mean(c), invstd(c);
    if (mode == NormMode::Train) {
        for (std::size_t ch = 0; ch < c; ++ch) {
            double s = 0;
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t q = 0; q < hw; ++q) s += x[(i * c + ch) * hw + q];
            const double mu = s / static_cast<double>(m);
            double v = 0;
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t q = 0; q < hw; ++q) {
                    const double d = x[(i * c + ch) * hw + q] - mu;
                    v += d * d;
                }
            const double var = v / static_cast<double>(m);
            mean[ch] = mu;
            invstd[ch] = 1.0 / std::sqrt(var + eps);
            if (update_running) {
                auto rm = stats.running_mean.mutable_data();
                auto rv = stats.running_var.mutable_data();
                rm[ch] = (1 - stats.momentum) * rm[ch] + stats.momentum * mu;
                rv[ch] = (1 - stats.momentum) * rv[ch] +
                         stats.momentum * v / static_cast<double>(m - 1);
            }
        }
    } else {
        auto rm = stats.running_mean.data();
        auto rv = stats.running_var.data();
        for (std::size_t ch = 0; ch < c; ++ch) {
            mean[ch] = rm[ch];
            invstd[ch] = 1.0 / std::sqrt(rv[ch] + eps);
        }
    }

    std::vector<double> out(input.numel());
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t q = 0; q < hw; ++q) {
                const std::size_t idx = (i * c + ch) * hw + q;
                out[idx] = gd[ch] * (x[idx] - mean[ch]) * invstd[ch] + bd[ch];
            }

    const bool batch_stats = mode == NormMode::Train;
    return Tensor::make_result(
        input.shape(), std::move(out), {input, gamma, beta},
        [n, c, hw, m, mean, invstd, batch_stats](Node& self) {
            const double* x = input_data(self, 0);
            const double* gm = input_data(self, 1);
            double* dx = input_grad(self, 0);
            double* dg = input_grad(self, 1);
            double* dbt = input_grad(self, 2);
            const double* dy = self.grad.data();
            for (std::size_t ch = 0; ch < c; ++ch) {
                double sum_dy = 0, sum_dy_xhat = 0;
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t q = 0; q < hw; ++q) {
                        const std::size_t idx = (i * c + ch) * hw + q;
                        const double xhat = (x[idx] - mean[ch]) * invstd[ch];
                        sum_dy += dy[idx];
                        sum_dy_xhat += dy[idx] * xhat;
                    }
                if (dg) dg[ch] += sum_dy_xhat;
                if (dbt) dbt[ch] += sum_dy;
                if (!dx) continue;
                const double md = static_cast<double>(m);
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t q = 0; q < hw; ++q) {
                        const std::size_t idx = (i * c + ch) * hw + q;
                        if (batch_stats) {
                            const double xhat = (x[idx] - mean[ch]) * invstd[ch];
                            dx[idx] += gm[ch] * invstd[ch] / md * (md * dy[idx] - sum_dy - xhat * sum_dy_xhat);
                        } else {
                            dx[idx] += gm[ch] * invstd[ch] * dy[idx];
                        }
                    }
            }
        },
        "batchnorm2d");
}

Tensor relu(const Tensor& x) {
    std::vector<double> out(x.numel());
    auto xd = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = xd[i] > 0 ? xd[i] : 0.0;
    return Tensor::make_result(
        x.shape(), std::move(out), {x},
        [](Node& self) {
            double* dx = input_grad(self, 0);
            const double* xv = input_data(self, 0);
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                if (xv[i] > 0) dx[i] += self.grad[i];
        },
        "relu");
}

Tensor sigmoid(const Tensor& x) {
    std::vector<double> out(x.numel());
    auto xd = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = sigmoid_scalar(xd[i]);
    return Tensor::make_result(
        x.shape(), std::move(out), {x},
        [](Node& self) {
            double* dx = input_grad(self, 0);
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                const double s = self.data[i];
                dx[i] += self.grad[i] * s * (1 - s);
            }
        },
        "sigmoid");
}

Tensor maxpool2d(const Tensor& x, std::size_t kernel, std::size_t stride) {
    require_rank(x, 4, "maxpool2d", "input");
    require(kernel >= 1 && stride >= 1, "maxpool2d: kernel and stride must be positive");
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    require(h >= kernel && w >= kernel, "maxpool2d: kernel larger than input " + x.shape_string());
    const std::size_t ho = (h - kernel) / stride + 1, wo = (w - kernel) / stride + 1;
    std::vector<double> out(n * c * ho * wo);
    std::vector<std::size_t> argmax(out.size());
    auto xd = x.data();
    for (std::size_t plane = 0; plane < n * c; ++plane)
        for (std::size_t oi = 0; oi < ho; ++oi)
            for (std::size_t oj = 0; oj < wo; ++oj) {
                std::size_t best = plane * h * w + (oi * stride) * w + oj * stride;
                for (std::size_t ki = 0; ki < kernel; ++ki)
                    for (std::size_t kj = 0; kj < kernel; ++kj) {
                        const std::size_t idx = plane * h * w + (oi * stride + ki) * w + oj * stride + kj;
                        if (xd[idx] > xd[best]) best = idx;
                    }
                const std::size_t o = (plane * ho + oi) * wo + oj;
                out[o] = xd[best];
                argmax[o] = best;
            }
    return Tensor::make_result(
        {n, c, ho, wo}, std::move(out), {x},
        [argmax = std::move(argmax)](Node& self) {
            double* dx = input_grad(self, 0);
            for (std::size_t o = 0; o < argmax.size(); ++o) dx[argmax[o]] += self.grad[o];
        },
        "maxpool2d");
}

Tensor adaptive_avgpool2d(const Tensor& x, std::size_t out_h, std::size_t out_w) {
    require_rank(x, 4, "adaptive_avgpool2d", "input");
    require(out_h >= 1 && out_w >= 1, "adaptive_avgpool2d: output extent must be positive");
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    require(h >= out_h && w >= out_w, "adaptive_avgpool2d: output larger than input " + x.shape_string());
    auto lo = [](std::size_t i, std::size_t in, std::size_t out) { return (i * in) / out; };
    auto hi = [](std::size_t i, std::size_t in, std::size_t out) { return ((i + 1) * in + out - 1) / out; };
    std::vector<double> out(n * c * out_h * out_w);
    auto xd = x.data();
    for (std::size_t plane = 0; plane < n * c; ++plane)
        for (std::size_t i = 0; i < out_h; ++i)
            for (std::size_t j = 0; j < out_w; ++j) {
                const std::size_t r0 = lo(i, h, out_h), r1 = hi(i, h, out_h);
                const std::size_t c0 = lo(j, w, out_w), c1 = hi(j, w, out_w);
                double s = 0;
                for (std::size_t r = r0; r < r1; ++r)
                    for (std::size_t q = c0; q < c1; ++q) s += xd[plane * h * w + r * w + q];
                out[(plane * out_h + i) * out_w + j] = s / static_cast<double>((r1 - r0) * (c1 - c0));
            }
    return Tensor::make_result(
        {n, c, out_h, out_w}, std::move(out), {x},
        [n, c, h, w, out_h, out_w, lo, hi](Node& self) {
            double* dx = input_grad(self, 0);
            for (std::size_t plane = 0; plane < n * c; ++plane)
                for (std::size_t i = 0; i < out_h; ++i)
                    for (std::size_t j = 0; j < out_w; ++j) {
                        const std::size_t r0 = lo(i, h, out_h), r1 = hi(i, h, out_h);
                        const std::size_t c0 = lo(j, w, out_w), c1 = hi(j, w, out_w);
                        const double g = self.grad[(plane * out_h + i) * out_w + j] /
                                         static_cast<double>((r1 - r0) * (c1 - c0));
                        for (std::size_t r = r0; r < r1; ++r)
                            for (std::size_t q = c0; q < c1; ++q) dx[plane * h * w + r * w + q] += g;
                    }
        },
        "adaptive_avgpool2d");
}

Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias) {
    require_rank(input, 2, "linear", "input");
    require_rank(weight, 2, "linear", "weight");
    const std::size_t n = input.dim(0), d = input.dim(1), e = weight.dim(1);
    if (weight.dim(0) != d)
        fail(ErrorKind::InvalidArgument,
             "linear: input " + input.shape_string() + " incompatible with weight " + weight.shape_string());
    Tensor b = bias.defined() ? bias : Tensor::zeros({e});
    require(b.shape() == Shape{e}, "linear: bias " + b.shape_string() + " does not match weight " +
                                       weight.shape_string());
    std::vector<double> out(n * e);
    for (std::size_t i = 0; i < n; ++i) std::copy(b.data().begin(), b.data().end(), out.begin() + i * e);
    gemm_nn(input.data().data(), weight.data().data(), out.data(), n, d, e);
    return Tensor::make_result(
        {n, e}, std::move(out), {input, weight, b},
        [n, d, e](Node& self) {
            const double* x = input_data(self, 0);
            const double* wt = input_data(self, 1);
            double* dx = input_grad(self, 0);
            double* dw = input_grad(self, 1);
            double* db = input_grad(self, 2);
            const double* dy = self.grad.data();
            if (db)
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < e; ++j) db[j] += dy[i * e + j];
            if (dw) gemm_tn(x, dy, dw, n, d, e);
            if (dx) gemm_nt(dy, wt, dx, n, e, d);
        },
        "linear");
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
    return Tensor::make_result(
        a.shape(), std::move(out), {a, b},
        [](Node& self) {
            for (std::size_t k = 0; k < 2; ++k)
                if (double* d = input_grad(self, k))
                    for (std::size_t i = 0; i < self.grad.size(); ++i) d[i] += self.grad[i];
        },
        "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
    return Tensor::make_result(
        a.shape(), std::move(out), {a, b},
        [](Node& self) {
            if (double* d = input_grad(self, 0))
                for (std::size_t i = 0; i < self.grad.size(); ++i) d[i] += self.grad[i];
            if (double* d = input_grad(self, 1))
                for (std::size_t i = 0; i < self.grad.size(); ++i) d[i] -= self.grad[i];
        },
        "sub");
}

Tensor mul_elem(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul_elem");
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
    return Tensor::make_result(
        a.shape(), std::move(out), {a, b},
        [](Node& self) {
            const double* av = input_data(self, 0);
            const double* bv = input_data(self, 1);
            if (double* d = input_grad(self, 0))
                for (std::size_t i = 0; i < self.grad.size(); ++i) d[i] += self.grad[i] * bv[i];
            if (double* d = input_grad(self, 1))
                for (std::size_t i = 0; i < self.grad.size(); ++i) d[i] += self.grad[i] * av[i];
        },
        "mul_elem");
}

Tensor scale(const Tensor& a, double factor) {
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * factor;
    return Tensor::make_result(
        a.shape(), std::move(out), {a},
        [factor](Node& self) {
            double* d = input_grad(self, 0);
            for (std::size_t i = 0; i < self.grad.size(); ++i) d[i] += self.grad[i] * factor;
        },
        "scale");
}

Tensor reciprocal(const Tensor& a) {
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (a[i] == 0.0) fail(ErrorKind::Numeric, "reciprocal: division by zero");
        out[i] = 1.0 / a[i];
    }
    return Tensor::make_result(
        a.shape(), std::move(out), {a},
        [](Node& self) {
            double* d = input_grad(self, 0);
            for (std::size_t i = 0; i < self.grad.size(); ++i) d[i] -= self.grad[i] * self.data[i] * self.data[i];
        },
        "reciprocal");
}

Tensor clamp_min(const Tensor& a, double floor) {
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(a[i], floor);
    return Tensor::make_result(
        a.shape(), std::move(out), {a},
        [floor](Node& self) {
            double* d = input_grad(self, 0);
            const double* av = input_data(self, 0);
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                if (av[i] >= floor) d[i] += self.grad[i];
        },
        "clamp_min");
}

Tensor sum_all(const Tensor& a) {
    require(a.numel() > 0, "sum_all: empty tensor");
    double s = 0;
    for (double v : a.data()) s += v;
    return Tensor::make_result(
        {}, {s}, {a},
        [](Node& self) {
            double* d = input_grad(self, 0);
            const double g = self.grad[0];
            for (std::size_t i = 0; i < self.inputs[0]->data.size(); ++i) d[i] += g;
        },
        "sum_all");
}

Tensor mean_all(const Tensor& a) {
    require(a.numel() > 0, "mean_all: empty tensor");
    double s = 0;
    for (double v : a.data()) s += v;
    const double inv = 1.0 / static_cast<double>(a.numel());
    return Tensor::make_result(
        {}, {s * inv}, {a},
        [inv](Node& self) {
            double* d = input_grad(self, 0);
            const double g = self.grad[0] * inv;
            for (std::size_t i = 0; i < self.inputs[0]->data.size(); ++i) d[i] += g;
        },
        "mean_all");
}

Tensor reshape(const Tensor& a, Shape shape) {
    if (numel_of(shape) != a.numel())
        fail(ErrorKind::InvalidArgument, "reshape: cannot view " + a.shape_string() + " as " + shape_str(shape));
    std::vector<double> out(a.data().begin(), a.data().end());
    return Tensor::make_result(
        std::move(shape), std::move(out), {a},
        [](Node& self) {
            double* d = input_grad(self, 0);
            for (std::size_t i = 0; i < self.grad.size(); ++i) d[i] += self.grad[i];
        },
        "reshape");
}

Tensor channel_mean_max(const Tensor& x) {
    require_rank(x, 4, "channel_mean_max", "input");
    const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    require(c >= 1, "channel_mean_max: no channels");
    std::vector<double> out(n * 2 * hw);
    std::vector<std::size_t> argmax(n * hw);
    auto xd = x.data();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t q = 0; q < hw; ++q) {
            double s = 0;
            std::size_t best = 0;
            for (std::size_t ch = 0; ch < c; ++ch) {
                const double v = xd[(i * c + ch) * hw + q];
                s += v;
                if (v > xd[(i * c + best) * hw + q]) best = ch;
            }
            out[(i * 2) * hw + q] = s / static_cast<double>(c);
            out[(i * 2 + 1) * hw + q] = xd[(i * c + best) * hw + q];
            argmax[i * hw + q] = best;
        }
    return Tensor::make_result(
        {n, 2, x.dim(2), x.dim(3)}, std::move(out), {x},
        [n, c, hw, argmax = std::move(argmax)](Node& self) {
            double* dx = input_grad(self, 0);
            const double invc = 1.0 / static_cast<double>(c);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t q = 0; q < hw; ++q) {
                    const double gmean = self.grad[(i * 2) * hw + q] * invc;
                    for (std::size_t ch = 0; ch < c; ++ch) dx[(i * c + ch) * hw + q] += gmean;
                    dx[(i * c + argmax[i * hw + q]) * hw + q] += self.grad[(i * 2 + 1) * hw + q];
                }
        },
        "channel_mean_max");
}

Tensor mul_channel_broadcast(const Tensor& x, const Tensor& mask) {
    require_rank(x, 4, "mul_channel_broadcast", "input");
    require_rank(mask, 4, "mul_channel_broadcast", "mask");
    const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    if (mask.shape() != Shape{n, 1, x.dim(2), x.dim(3)})
        fail(ErrorKind::InvalidArgument,
             "mul_channel_broadcast: mask " + mask.shape_string() + " does not fit input " + x.shape_string());
    std::vector<double> out(x.numel());
    auto xd = x.data();
    auto md = mask.data();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t q = 0; q < hw; ++q) out[(i * c + ch) * hw + q] = xd[(i * c + ch) * hw + q] * md[i * hw + q];
    return Tensor::make_result(
        x.shape(), std::move(out), {x, mask},
        [n, c, hw](Node& self) {
            const double* xv = input_data(self, 0);
            const double* mv = input_data(self, 1);
            double* dx = input_grad(self, 0);
            double* dm = input_grad(self, 1);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t ch = 0; ch < c; ++ch)
                    for (std::size_t q = 0; q < hw; ++q) {
                        const std::size_t idx = (i * c + ch) * hw + q;
                        if (dx) dx[idx] += self.grad[idx] * mv[i * hw + q];
                        if (dm) dm[i * hw + q] += self.grad[idx] * xv[idx];
                    }
        },
        "mul_channel_broadcast");
}

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
    require_same_shape(pred, target, "mse_loss");
    require(pred.numel() > 0, "mse_loss: empty tensors");
    double s = 0;
    for (std::size_t i = 0; i < pred.numel(); ++i) {
        const double d = pred[i] - target[i];
        s += d * d;
    }
    const double inv = 1.0 / static_cast<double>(pred.numel());
    return Tensor::make_result(
        {}, {s * inv}, {pred, target},
        [inv](Node& self) {
            const double* p = input_data(self, 0);
            const double* t = input_data(self, 1);
            const double g = 2.0 * inv * self.grad[0];
            const std::size_t count = self.inputs[0]->data.size();
            if (double* d = input_grad(self, 0))
                for (std::size_t i = 0; i < count; ++i) d[i] += g * (p[i] - t[i]);
            if (double* d = input_grad(self, 1))
                for (std::size_t i = 0; i < count; ++i) d[i] -= g * (p[i] - t[i]);
        },
        "mse_loss");
}

}  // namespace rainnas::grad
