#pragma once

#include <span>

namespace rainnas::stats {

double normal_cdf(double z);

struct DmResult {
    double statistic = 0;
    double prob = 0;  // one-sided, Phi(statistic)
};

// d_t = loss_a_t - loss_b_t; variance uses autocovariances up to lag h-1.
DmResult dm_test(std::span<const double> loss_a, std::span<const double> loss_b, std::size_t horizon = 1);

}  // namespace rainnas::stats
