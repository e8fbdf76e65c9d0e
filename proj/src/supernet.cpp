#include "supernet.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>

#include "binio.hpp"
#include "error.hpp"

namespace rainnas::nas {

using grad::ParamStore;
using grad::Shape;

void NetworkConfig::validate() const {
    require(in_channels >= 1, "network: in_channels must be positive");
    require(feature_width >= 1, "network: feature_width must be positive");
    require(num_blocks >= 1, "network: num_blocks must be at least 1");
    require(grid_h >= 4 && grid_w >= 4, "network: grid extent must be at least 4");
    require(projector_pool >= 1, "network: projector_pool must be positive");
    require(cab_lambda > 0, "network: cab_lambda must be positive");
}

std::string ArchChoice::to_string() const {
    std::string s;
    for (std::size_t i = 0; i < ops.size(); ++i) {
        if (i) s += ',';
        s += op_name(ops[i]);
    }
    return s;
}

ArchParams ArchParams::zeros(std::size_t blocks) {
    ArchParams p;
    for (std::size_t i = 0; i < blocks; ++i) p.rows.push_back(Tensor::zeros({kNumOps}, true));
    return p;
}

ArchParams ArchParams::random(std::size_t blocks, Rng& rng, double scale) {
    ArchParams p;
    for (std::size_t i = 0; i < blocks; ++i) {
        std::vector<double> v(kNumOps);
        for (auto& x : v) x = scale * standard_normal(rng);
        p.rows.push_back(Tensor::from({kNumOps}, std::move(v), true));
    }
    return p;
}

std::vector<double> ArchParams::probs(std::size_t block) const {
    require(block < rows.size(), "ArchParams: block index out of range");
    auto row = rows[block].data();
    const double mx = *std::max_element(row.begin(), row.end());
    std::vector<double> p(row.size());
    double s = 0;
    for (std::size_t k = 0; k < row.size(); ++k) s += (p[k] = std::exp(row[k] - mx));
    for (auto& x : p) x /= s;
    return p;
}

ArchChoice sample_arch(const ArchParams& theta, Rng& rng) {
    ArchChoice a;
    for (std::size_t i = 0; i < theta.blocks(); ++i) {
        auto p = theta.probs(i);
        a.ops.push_back(kAllOps[sample_categorical(rng, p)]);
    }
    return a;
}

ArchChoice derive_arch(const ArchParams& theta) {
    ArchChoice a;
    for (const auto& row : theta.rows) {
        auto v = row.data();
        for (double x : v) require(std::isfinite(x), "derive_arch: non-finite logit");
        const auto best = std::max_element(v.begin(), v.end()) - v.begin();  // first maximum
        a.ops.push_back(kAllOps[static_cast<std::size_t>(best)]);
    }
    return a;
}

std::string arch_to_json(const ArchChoice& arch) {
    std::string s = "{ \"blocks\": [";
    for (std::size_t i = 0; i < arch.ops.size(); ++i) {
        if (i) s += ",";
        s += '"';
        s += op_name(arch.ops[i]);
        s += '"';
    }
    s += "] }\n";
    return s;
}

ArchChoice arch_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        fail(ErrorKind::Format, std::string("architecture file: ") + e.what());
    }
    if (!j.is_object() || !j.contains("blocks") || !j["blocks"].is_array())
        fail(ErrorKind::Format, "architecture file: expected an object with a \"blocks\" array");
    ArchChoice a;
    for (const auto& b : j["blocks"]) {
        if (!b.is_string()) fail(ErrorKind::Format, "architecture file: block entries must be strings");
        a.ops.push_back(parse_op(b.get<std::string>()));
    }
    if (a.ops.empty()) fail(ErrorKind::Format, "architecture file: no blocks");
    return a;
}

void save_arch(const ArchChoice& arch, const std::filesystem::path& path) {
    auto s = arch_to_json(arch);
    io::write_file(path, std::vector<std::uint8_t>(s.begin(), s.end()));
}

ArchChoice load_arch(const std::filesystem::path& path) {
    auto bytes = io::read_file(path);
    return arch_from_json(std::string(bytes.begin(), bytes.end()));
}

namespace {

Tensor kaiming_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::vector<double> v(grad::numel_of(shape));
    for (auto& x : v) x = uniform(rng, -bound, bound);
    return Tensor::from(std::move(shape), std::move(v));
}

void add_bn(ParamStore& ps, const std::string& prefix, std::size_t c) {
    ps.add(prefix + ".gamma", Tensor::full({c}, 1.0));
    ps.add(prefix + ".beta", Tensor::zeros({c}));
    ps.add(prefix + ".running_mean", Tensor::zeros({c}), false);
    ps.add(prefix + ".running_var", Tensor::full({c}, 1.0), false);
}

}  // namespace

std::string Supernet::op_prefix(std::size_t block, OpKind op) {
    return "blocks." + std::to_string(block) + "." + std::string(op_name(op));
}

Supernet::Supernet(NetworkConfig cfg, std::uint64_t seed, const std::optional<ArchChoice>& only) : cfg_(cfg) {
    cfg_.validate();
    if (only) require(only->ops.size() == cfg_.num_blocks, "Supernet: arch length does not match num_blocks");
    Rng rng = derive_rng(seed, 0x5e7);
    const std::size_t c = cfg_.in_channels, f = cfg_.feature_width;
    params_.add("stem.conv.weight", kaiming_uniform({f, c, 3, 3}, c * 9, rng));
    params_.add("stem.conv.bias", Tensor::zeros({f}));
    add_bn(params_, "stem.bn", f);
    for (std::size_t i = 0; i < cfg_.num_blocks; ++i) {
        // Draw every op's weights regardless of `only` so a path's initial
        // values do not depend on which other ops exist.
        auto w1 = kaiming_uniform({f, f, 3, 3}, f * 9, rng);
        auto w2 = kaiming_uniform({f, f, 3, 3}, f * 9, rng);
        auto ws = kaiming_uniform({1, 2, 7, 7}, 2 * 49, rng);
        const bool want_rb = !only || only->ops[i] == OpKind::RB;
        const bool want_sab = !only || only->ops[i] == OpKind::SAB;
        if (want_rb) {
            const auto p = op_prefix(i, OpKind::RB);
            params_.add(p + ".conv1.weight", std::move(w1));
            add_bn(params_, p + ".bn1", f);
            params_.add(p + ".conv2.weight", std::move(w2));
            add_bn(params_, p + ".bn2", f);
        }
        if (want_sab) {
            const auto p = op_prefix(i, OpKind::SAB);
            params_.add(p + ".conv.weight", std::move(ws));
            params_.add(p + ".conv.bias", Tensor::zeros({1}));
        }
    }
    const std::size_t pooled = f * cfg_.projector_pool * cfg_.projector_pool;
    params_.add("proj.fc.weight", kaiming_uniform({pooled, cfg_.out_dim()}, pooled, rng));
    params_.add("proj.fc.bias", Tensor::zeros({cfg_.out_dim()}));
    bind();
}

Supernet::Supernet(NetworkConfig cfg, ParamStore params) : cfg_(cfg), params_(std::move(params)) {
    cfg_.validate();
    bind();
}

void Supernet::bind() {
    auto bn_stats = [&](const std::string& prefix) {
        return grad::BatchNormStats{params_.at(prefix + ".running_mean"), params_.at(prefix + ".running_var"), 0.1};
    };
    auto expect = [&](const std::string& name, const Shape& shape) {
        const auto& t = params_.at(name);
        if (t.shape() != shape)
            fail(ErrorKind::Format, "parameter " + name + " has shape " + t.shape_string() + ", expected " +
                                        grad::shape_str(shape));
    };
    const std::size_t c = cfg_.in_channels, f = cfg_.feature_width;
    expect("stem.conv.weight", {f, c, 3, 3});
    expect("stem.conv.bias", {f});
    stem_ = {params_.at("stem.conv.weight"), params_.at("stem.conv.bias"), params_.at("stem.bn.gamma"),
             params_.at("stem.bn.beta"), bn_stats("stem.bn")};
    blocks_.assign(cfg_.num_blocks, {});
    for (std::size_t i = 0; i < cfg_.num_blocks; ++i) {
        const auto rb = op_prefix(i, OpKind::RB);
        if (params_.contains(rb + ".conv1.weight")) {
            expect(rb + ".conv1.weight", {f, f, 3, 3});
            expect(rb + ".conv2.weight", {f, f, 3, 3});
            blocks_[i].rb = ResidualParams{
                {params_.at(rb + ".conv1.weight"), params_.at(rb + ".bn1.gamma"), params_.at(rb + ".bn1.beta"),
                 bn_stats(rb + ".bn1")},
                {params_.at(rb + ".conv2.weight"), params_.at(rb + ".bn2.gamma"), params_.at(rb + ".bn2.beta"),
                 bn_stats(rb + ".bn2")}};
        }
        const auto sab = op_prefix(i, OpKind::SAB);
        if (params_.contains(sab + ".conv.weight")) {
            expect(sab + ".conv.weight", {1, 2, 7, 7});
            blocks_[i].sab = SpatialParams{params_.at(sab + ".conv.weight"), params_.at(sab + ".conv.bias")};
        }
    }
    const std::size_t pooled = f * cfg_.projector_pool * cfg_.projector_pool;
    expect("proj.fc.weight", {pooled, cfg_.out_dim()});
    proj_weight_ = params_.at("proj.fc.weight");
    proj_bias_ = params_.at("proj.fc.bias");
}

bool Supernet::has_op(std::size_t block, OpKind op) const {
    if (block >= blocks_.size()) return false;
    switch (op) {
        case OpKind::RB: return blocks_[block].rb.has_value();
        case OpKind::SAB: return blocks_[block].sab.has_value();
        case OpKind::CAB: return blocks_[block].cab;
    }
    return false;
}

void Supernet::validate_arch(const ArchChoice& arch) const {
    if (arch.ops.size() != cfg_.num_blocks)
        fail(ErrorKind::InvalidArgument, "architecture has " + std::to_string(arch.ops.size()) +
                                             " blocks, network has " + std::to_string(cfg_.num_blocks));
    for (std::size_t i = 0; i < arch.ops.size(); ++i)
        if (!has_op(i, arch.ops[i]))
            fail(ErrorKind::InvalidArgument, "block " + std::to_string(i) + " has no parameters for op " +
                                                 std::string(op_name(arch.ops[i])));
}

Tensor Supernet::stem_forward(const Tensor& x, ForwardMode mode) {
    if (x.rank() != 4 || x.dim(1) != cfg_.in_channels)
        fail(ErrorKind::InvalidArgument, "stem: input " + x.shape_string() + " does not have " +
                                             std::to_string(cfg_.in_channels) + " channels");
    require(x.dim(2) >= 4 && x.dim(3) >= 4, "stem: spatial extent must be at least 4, got " + x.shape_string());
    auto h = grad::conv2d(x, stem_.weight, stem_.bias, 1, 1);
    h = grad::batchnorm2d(h, stem_.gamma, stem_.beta, stem_.stats, mode.norm, 1e-5, mode.update_running);
    return grad::maxpool2d(grad::relu(h), 2, 2);
}

Tensor Supernet::block_forward(std::size_t block, OpKind op, const Tensor& h, ForwardMode mode) {
    if (!has_op(block, op))
        fail(ErrorKind::InvalidArgument,
             "block " + std::to_string(block) + " has no op " + std::string(op_name(op)));
    switch (op) {
        case OpKind::RB: return rb_forward(h, *blocks_[block].rb, mode);
        case OpKind::SAB: return sab_forward(h, *blocks_[block].sab);
        case OpKind::CAB: return cab_forward(h, cfg_.cab_lambda);
    }
    fail(ErrorKind::InvalidArgument, "invalid op");
}

Tensor Supernet::projector_forward(const Tensor& h) {
    const std::size_t p = cfg_.projector_pool;
    auto pooled = grad::adaptive_avgpool2d(h, p, p);
    auto flat = grad::reshape(pooled, {h.dim(0), h.dim(1) * p * p});
    return grad::linear(flat, proj_weight_, proj_bias_);
}

Tensor Supernet::forward(const Tensor& x, const ArchChoice& arch, ForwardMode mode) {
    validate_arch(arch);
    auto h = stem_forward(x, mode);
    for (std::size_t i = 0; i < arch.ops.size(); ++i) h = block_forward(i, arch.ops[i], h, mode);
    return projector_forward(h);
}

ParamStore Supernet::subset_for(const ArchChoice& arch) const {
    validate_arch(arch);
    ParamStore out;
    for (const auto& e : params_.entries()) {
        bool keep = true;
        if (e.name.starts_with("blocks.")) {
            keep = false;
            for (std::size_t i = 0; i < arch.ops.size(); ++i)
                if (e.name.starts_with(op_prefix(i, arch.ops[i]) + ".")) keep = true;
        }
        if (keep) out.add(e.name, e.tensor, e.trainable);
    }
    return out;
}

void Supernet::set_op_trainable(std::size_t block, OpKind op, bool trainable) {
    const auto prefix = op_prefix(block, op) + ".";
    for (auto& e : params_.entries()) {
        if (!e.name.starts_with(prefix) || e.name.find(".running_") != std::string::npos) continue;
        e.trainable = trainable;
        e.tensor.set_requires_grad(trainable);
    }
}

}  // namespace rainnas::nas
