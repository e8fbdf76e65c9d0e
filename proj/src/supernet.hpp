#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "blocks.hpp"
#include "params.hpp"
#include "random.hpp"

namespace rainnas::nas {

struct NetworkConfig {
    std::size_t in_channels = 4;
    std::size_t feature_width = 32;
    std::size_t num_blocks = 4;
    std::size_t grid_h = 33;
    std::size_t grid_w = 33;
    std::size_t projector_pool = 4;
    double cab_lambda = kDefaultCabLambda;

    std::size_t out_dim() const { return grid_h * grid_w; }
    void validate() const;
};

// A concrete path through the supernet: one operation per block.
struct ArchChoice {
    std::vector<OpKind> ops;
    bool operator==(const ArchChoice&) const = default;
    std::string to_string() const;  // e.g. "CAB,RB,SAB,CAB"
};

// Per-block operation logits. Each row is its own tensor so a row can be
// optimized while the others stay bitwise frozen.
struct ArchParams {
    std::vector<Tensor> rows;  // each [kNumOps]

    static ArchParams zeros(std::size_t blocks);
    // Small random logits so that argmax ties are broken from the start.
    static ArchParams random(std::size_t blocks, Rng& rng, double scale = 1e-3);
    std::size_t blocks() const { return rows.size(); }
    std::vector<double> probs(std::size_t block) const;  // softmax of row
};

// Per block, draws an op index from softmax(row).
ArchChoice sample_arch(const ArchParams& theta, Rng& rng);
// Per block argmax; ties go to the lowest index.
ArchChoice derive_arch(const ArchParams& theta);

// Architecture file: { "blocks": ["CAB","RB","SAB","CAB"] }
std::string arch_to_json(const ArchChoice& arch);
ArchChoice arch_from_json(const std::string& text);
void save_arch(const ArchChoice& arch, const std::filesystem::path& path);
ArchChoice load_arch(const std::filesystem::path& path);

// stem -> N blocks (each one of RB/SAB/CAB) -> projector.
class Supernet {
public:
    // Fresh Kaiming-uniform initialization. When `only` is given, parameters
    // are created just for the operations on that path.
    Supernet(NetworkConfig cfg, std::uint64_t seed, const std::optional<ArchChoice>& only = std::nullopt);
    // Binds the network structure onto an existing parameter set.
    Supernet(NetworkConfig cfg, grad::ParamStore params);

    Supernet(const Supernet&) = delete;
    Supernet& operator=(const Supernet&) = delete;
    Supernet(Supernet&&) = default;
    Supernet& operator=(Supernet&&) = default;

    // [N, c, H, W] -> [N, F, floor(H/2), floor(W/2)]
    Tensor stem_forward(const Tensor& x, ForwardMode mode);
    Tensor block_forward(std::size_t block, OpKind op, const Tensor& h, ForwardMode mode);
    // [N, F, h, w] -> [N, grid_h * grid_w]
    Tensor projector_forward(const Tensor& h);
    Tensor forward(const Tensor& x, const ArchChoice& arch, ForwardMode mode);

    bool has_op(std::size_t block, OpKind op) const;
    void validate_arch(const ArchChoice& arch) const;

    grad::ParamStore& params() { return params_; }
    const grad::ParamStore& params() const { return params_; }
    const NetworkConfig& config() const { return cfg_; }
    // Parameters (and running statistics) used by `arch`, in store order.
    grad::ParamStore subset_for(const ArchChoice& arch) const;
    // Marks every parameter of (block, op) trainable or frozen.
    void set_op_trainable(std::size_t block, OpKind op, bool trainable);

    static std::string op_prefix(std::size_t block, OpKind op);

private:
    void bind();

    NetworkConfig cfg_;
    grad::ParamStore params_;

    struct Stem {
        Tensor weight, bias, gamma, beta;
        grad::BatchNormStats stats;
    } stem_;
    struct Block {
        std::optional<ResidualParams> rb;
        std::optional<SpatialParams> sab;
        bool cab = true;  // parameter-free
    };
    std::vector<Block> blocks_;
    Tensor proj_weight_, proj_bias_;
};

}  // namespace rainnas::nas
