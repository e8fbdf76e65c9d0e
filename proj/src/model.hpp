#pragma once

// A trained network: supernet parameters for one path plus the fixed affine
// maps between millimetres and network units.

#include <span>
#include <vector>

#include "dataset.hpp"
#include "supernet.hpp"

namespace rainnas::train {

using grad::Tensor;

// network input = mm / input_scale; mm output = net * output_scale + output_mean.
struct Normalizer {
    double input_scale = 1.0;
    double output_mean = 0.0;
    double output_scale = 1.0;

    static Normalizer fit(std::span<const data::GridSample> train);
    void store(grad::ParamStore& params) const;
    static Normalizer load(const grad::ParamStore& params);
};

// Stacks the ensembles of `samples[indices]` into [B, c, h, w] in network units.
Tensor batch_input(std::span<const data::GridSample> samples, std::span<const std::size_t> indices,
                   std::size_t channels, std::size_t h, std::size_t w, const Normalizer& norm);
// Observations of `samples[indices]` as [B, h*w] in mm.
Tensor batch_target(std::span<const data::GridSample> samples, std::span<const std::size_t> indices);

// [B, h*w] network output -> mm.
Tensor to_mm(const Tensor& net_out, const Normalizer& norm);

// Recovers in_channels, feature_width and projector_pool from parameter shapes.
nas::NetworkConfig infer_config(const grad::ParamStore& params, std::size_t num_blocks);

struct Model {
    nas::ArchChoice arch;
    nas::Supernet net;
    Normalizer norm;

    Model(nas::ArchChoice arch, nas::Supernet net, Normalizer norm);
    static Model load(const std::filesystem::path& checkpoint, const nas::ArchChoice& arch);
    void save(const std::filesystem::path& checkpoint) const;

    // Eval-mode predictions in mm, clamped at 0, one grid per sample.
    std::vector<std::vector<double>> predict(std::span<const data::GridSample> samples, std::size_t batch = 64);
};

}  // namespace rainnas::train
