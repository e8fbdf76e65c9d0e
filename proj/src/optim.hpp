#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "params.hpp"
#include "tensor.hpp"

namespace rainnas::grad {

void sgd_step(Tensor& param, double lr);

struct AdamOptions {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    std::vector<double> m, v;
    std::uint64_t steps = 0;
};

// One bias-corrected Adam update of `param` from its accumulated gradient.
void adam_step(Tensor& param, const AdamOptions& opt, AdamState& state);

// Adam over a ParamStore. Only trainable entries that received a gradient
// since their last zero_grad are stepped; the rest keep their values and
// moment state untouched.
class Adam {
public:
    explicit Adam(AdamOptions opt);
    void step(ParamStore& params);
    void step(Tensor& param, const std::string& key);
    const AdamOptions& options() const { return opt_; }

private:
    AdamOptions opt_;
    std::map<std::string, AdamState> states_;
};

}  // namespace rainnas::grad
