#include "optim.hpp"

#include <cmath>

#include "error.hpp"

namespace rainnas::grad {

void sgd_step(Tensor& param, double lr) {
    require(lr > 0, "sgd_step: learning rate must be positive");
    if (!param.has_grad()) return;
    auto p = param.mutable_data();
    auto g = param.grad();
    for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * g[i];
}

void adam_step(Tensor& param, const AdamOptions& opt, AdamState& state) {
    require(opt.lr > 0, "adam_step: learning rate must be positive");
    require(opt.beta1 >= 0 && opt.beta1 < 1 && opt.beta2 >= 0 && opt.beta2 < 1, "adam_step: betas must lie in [0,1)");
    if (!param.has_grad()) return;
    auto p = param.mutable_data();
    auto g = param.grad();
    if (state.m.empty()) {
        state.m.assign(p.size(), 0.0);
        state.v.assign(p.size(), 0.0);
    }
    require(state.m.size() == p.size(), "adam_step: state does not match parameter size");
    ++state.steps;
    const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(state.steps));
    const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(state.steps));
    for (std::size_t i = 0; i < p.size(); ++i) {
        state.m[i] = opt.beta1 * state.m[i] + (1 - opt.beta1) * g[i];
        state.v[i] = opt.beta2 * state.v[i] + (1 - opt.beta2) * g[i] * g[i];
        const double mhat = state.m[i] / c1;
        const double vhat = state.v[i] / c2;
        p[i] -= opt.lr * mhat / (std::sqrt(vhat) + opt.eps);
    }
}

Adam::Adam(AdamOptions opt) : opt_(opt) { require(opt.lr > 0, "Adam: learning rate must be positive"); }

void Adam::step(ParamStore& params) {
    for (auto& e : params.entries()) {
        if (!e.trainable || !e.tensor.touched()) continue;
        adam_step(e.tensor, opt_, states_[e.name]);
    }
}

void Adam::step(Tensor& param, const std::string& key) {
    if (!param.touched()) return;
    adam_step(param, opt_, states_[key]);
}

}  // namespace rainnas::grad
