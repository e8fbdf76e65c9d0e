#pragma once

// Statistical ensemble post-processing baselines. A stack is c member grids
// of hw pixels each, member-major.

#include <span>
#include <string>
#include <vector>

#include "dataset.hpp"

namespace rainnas::baselines {

enum class BaselineKind { EM, PM, WEM };

BaselineKind parse_kind(const std::string& name);
const char* kind_name(BaselineKind kind);

std::vector<double> ensemble_mean(std::span<const double> stack, std::size_t c, std::size_t hw);

// Probability matching: the EM field's pixel ranks receive every c-th value
// of the pooled, descending-sorted member values. EM ties break by pixel index.
std::vector<double> prob_match(std::span<const double> stack, std::size_t c, std::size_t hw);

std::vector<double> weighted_em(std::span<const double> stack, std::size_t c, std::size_t hw,
                                std::span<const double> weights);

inline constexpr double kWemDelta = 1e-6;

// w_i proportional to 1 / (MAE_i + delta), MAE_i pooled over all training pixels.
std::vector<double> fit_wem_weights(std::span<const data::GridSample> train, std::size_t c);

}  // namespace rainnas::baselines
