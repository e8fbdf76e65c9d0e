#include "model.hpp"

#include <algorithm>
#include <cmath>

#include "error.hpp"
#include "ops.hpp"

namespace rainnas::train {

namespace {
constexpr const char* kInputScale = "norm.input_scale";
constexpr const char* kOutputMean = "norm.output_mean";
constexpr const char* kOutputScale = "norm.output_scale";

void put(grad::ParamStore& ps, const char* name, double v) {
    if (ps.contains(name))
        ps.at(name).mutable_data()[0] = v;
    else
        ps.add(name, Tensor::from({1}, {v}), false);
}

double get(const grad::ParamStore& ps, const char* name) {
    if (!ps.contains(name)) fail(ErrorKind::Format, std::string("checkpoint lacks ") + name);
    return ps.at(name)[0];
}
}  // namespace

Normalizer Normalizer::fit(std::span<const data::GridSample> train) {
    require(!train.empty(), "Normalizer: empty training split");
    double in_sq = 0, out_sum = 0, out_sq = 0;
    std::size_t in_n = 0, out_n = 0;
    for (const auto& s : train) {
        for (float v : s.ensemble) in_sq += static_cast<double>(v) * v;
        in_n += s.ensemble.size();
        for (float v : s.observation) {
            out_sum += v;
            out_sq += static_cast<double>(v) * v;
        }
        out_n += s.observation.size();
    }
    Normalizer n;
    const double in_rms = std::sqrt(in_sq / static_cast<double>(in_n));
    n.input_scale = in_rms > 0 ? in_rms : 1.0;
    n.output_mean = out_sum / static_cast<double>(out_n);
    const double var = out_sq / static_cast<double>(out_n) - n.output_mean * n.output_mean;
    n.output_scale = var > 0 ? std::sqrt(var) : 1.0;
    return n;
}

void Normalizer::store(grad::ParamStore& params) const {
    put(params, kInputScale, input_scale);
    put(params, kOutputMean, output_mean);
    put(params, kOutputScale, output_scale);
}

Normalizer Normalizer::load(const grad::ParamStore& params) {
    Normalizer n{get(params, kInputScale), get(params, kOutputMean), get(params, kOutputScale)};
    if (!(n.input_scale > 0) || !(n.output_scale > 0) || !std::isfinite(n.output_mean))
        fail(ErrorKind::Format, "checkpoint has an invalid normalizer");
    return n;
}

Tensor batch_input(std::span<const data::GridSample> samples, std::span<const std::size_t> indices,
                   std::size_t channels, std::size_t h, std::size_t w, const Normalizer& norm) {
    const std::size_t per = channels * h * w;
    std::vector<double> v(indices.size() * per);
    for (std::size_t b = 0; b < indices.size(); ++b) {
        const auto& e = samples[indices[b]].ensemble;
        require(e.size() == per, "batch_input: sample ensemble size mismatch");
        for (std::size_t k = 0; k < per; ++k) v[b * per + k] = e[k] / norm.input_scale;
    }
    return Tensor::from({indices.size(), channels, h, w}, std::move(v));
}

Tensor batch_target(std::span<const data::GridSample> samples, std::span<const std::size_t> indices) {
    require(!indices.empty(), "batch_target: empty batch");
    const std::size_t hw = samples[indices[0]].observation.size();
    std::vector<double> v(indices.size() * hw);
    for (std::size_t b = 0; b < indices.size(); ++b) {
        const auto& o = samples[indices[b]].observation;
        require(o.size() == hw, "batch_target: observation size mismatch");
        std::copy(o.begin(), o.end(), v.begin() + static_cast<long>(b * hw));
    }
    return Tensor::from({indices.size(), hw}, std::move(v));
}

Tensor to_mm(const Tensor& net_out, const Normalizer& norm) {
    return grad::add(grad::scale(net_out, norm.output_scale), Tensor::full(net_out.shape(), norm.output_mean));
}

nas::NetworkConfig infer_config(const grad::ParamStore& params, std::size_t num_blocks) {
    if (!params.contains("stem.conv.weight") || !params.contains("proj.fc.weight"))
        fail(ErrorKind::Format, "checkpoint lacks stem or projector weights");
    const auto& stem = params.at("stem.conv.weight");
    const auto& proj = params.at("proj.fc.weight");
    if (stem.rank() != 4 || proj.rank() != 2) fail(ErrorKind::Format, "checkpoint stem/projector ranks are wrong");
    nas::NetworkConfig cfg;
    cfg.in_channels = stem.dim(1);
    cfg.feature_width = stem.dim(0);
    cfg.num_blocks = num_blocks;
    const std::size_t cells = proj.dim(0) / cfg.feature_width;
    const auto p = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(cells))));
    if (p * p * cfg.feature_width != proj.dim(0) || proj.dim(1) != cfg.grid_h * cfg.grid_w)
        fail(ErrorKind::Format, "checkpoint projector shape " + proj.shape_string() + " is inconsistent");
    cfg.projector_pool = p;
    return cfg;
}

Model::Model(nas::ArchChoice a, nas::Supernet n, Normalizer nm) : arch(std::move(a)), net(std::move(n)), norm(nm) {
    net.validate_arch(arch);
}

Model Model::load(const std::filesystem::path& checkpoint, const nas::ArchChoice& arch) {
    auto params = grad::load_checkpoint(checkpoint);
    auto cfg = infer_config(params, arch.ops.size());
    auto norm = Normalizer::load(params);
    return Model(arch, nas::Supernet(cfg, std::move(params)), norm);
}

void Model::save(const std::filesystem::path& checkpoint) const {
    auto ps = net.subset_for(arch);
    norm.store(ps);
    grad::save_checkpoint(ps, checkpoint);
}

std::vector<std::vector<double>> Model::predict(std::span<const data::GridSample> samples, std::size_t batch) {
    require(batch >= 1, "predict: batch size must be positive");
    grad::NoGradGuard guard;
    const auto& cfg = net.config();
    std::vector<std::vector<double>> out;
    out.reserve(samples.size());
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < samples.size(); start += batch) {
        idx.clear();
        for (std::size_t i = start; i < std::min(samples.size(), start + batch); ++i) idx.push_back(i);
        auto x = batch_input(samples, idx, cfg.in_channels, cfg.grid_h, cfg.grid_w, norm);
        auto y = to_mm(net.forward(x, arch, {grad::NormMode::Eval, false}), norm);
        const std::size_t hw = cfg.out_dim();
        for (std::size_t b = 0; b < idx.size(); ++b) {
            std::vector<double> g(hw);
            for (std::size_t q = 0; q < hw; ++q) g[q] = std::max(0.0, y[b * hw + q]);
            out.push_back(std::move(g));
        }
    }
    return out;
}

}  // namespace rainnas::train
