#pragma once

// Alternating architecture search. Epoch t (0-based) is a theta epoch when
// t % u == 0 and a weight epoch otherwise; theta epochs update only the
// logits of block t / (T / N) + 1 (1-based).

#include <array>
#include <functional>
#include <span>
#include <vector>

#include "dataset.hpp"
#include "model.hpp"
#include "optim.hpp"
#include "supernet.hpp"

namespace rainnas::search {

using grad::Tensor;

struct SearchConfig {
    std::size_t epochs = 24;  // T
    std::size_t blocks = 4;   // N
    std::size_t u = 3;
    double momentum = 0.99;
    std::size_t batch_size = 8;
    double lr = 1e-5;        // online weights
    double theta_lr = 1e-2;  // architecture logits
    std::size_t crop = 24;
    std::uint64_t seed = 0;
    bool supervised = false;            // observation MSE instead of the contrastive loss
    std::size_t batches_per_epoch = 0;  // 0: full pass over the training set

    void validate() const;
};

enum class Phase { Weights, Theta };
const char* phase_name(Phase p);

Phase phase_for(std::size_t t, std::size_t u);
// 1-based block index scheduled at theta epoch t.
std::size_t theta_block(std::size_t t, std::size_t epochs, std::size_t blocks);

struct CropOffset {
    std::size_t y = 0, x = 0;
};

CropOffset random_offset(std::size_t h, std::size_t w, std::size_t crop, Rng& rng);
// [c, h, w] stack -> [c, crop, crop] window at `at`.
std::vector<double> crop_stack(std::span<const float> stack, std::size_t c, std::size_t h, std::size_t w,
                               CropOffset at, std::size_t crop);
// Four independently placed crops (x1, x2, x1', x2') of one sample.
std::array<std::vector<double>, 4> random_crop4(std::span<const float> stack, std::size_t c, std::size_t h,
                                                std::size_t w, std::size_t crop, Rng& rng);

// MSE(q1, k1) + MSE(q2, k2); k1 and k2 are detached.
Tensor contrastive_loss(const Tensor& q1, const Tensor& q2, const Tensor& k1, const Tensor& k2);

// target <- m * target + (1 - m) * online, entry by entry (running statistics included).
void ema_sync(grad::ParamStore& target, const grad::ParamStore& online, double m);

struct TwinState {
    nas::Supernet online;
    nas::Supernet target;
    nas::ArchParams theta;
    grad::Adam weight_opt;
    grad::Adam theta_opt;
    train::Normalizer norm;
    double baseline = 0;  // running mean of theta-phase losses
    bool has_baseline = false;

    static TwinState create(const nas::NetworkConfig& net, const SearchConfig& cfg,
                            std::span<const data::GridSample> train);
    // Re-copies the online weights into the target.
    void resync_target();
};

double search_step_weights(std::span<const data::GridSample> batch, TwinState& state, const SearchConfig& cfg,
                           Rng& rng);
double search_step_theta(std::span<const data::GridSample> batch, TwinState& state, const SearchConfig& cfg,
                         std::size_t t, Rng& rng);

struct EpochLog {
    std::size_t epoch = 0;  // t, 0-based
    Phase phase = Phase::Weights;
    std::size_t block = 0;  // 1-based for theta epochs, 0 for weight epochs
    double loss = 0;
};

inline constexpr const char* kSearchLogHeader = "epoch,phase,block,loss";
std::string log_csv_row(const EpochLog& e);

struct SearchResult {
    nas::ArchChoice arch;
    std::vector<EpochLog> log;
    std::vector<std::vector<double>> theta;  // final logits per block
    grad::ParamStore online;
};

// `prepare` runs once on the fresh state (before the target copy is taken),
// e.g. to freeze or overwrite operations.
SearchResult run_search(std::span<const data::GridSample> train, const nas::NetworkConfig& net, const SearchConfig& cfg,
                        const std::function<void(TwinState&)>& prepare = {},
                        const std::function<void(const EpochLog&)>& on_epoch = {});

}  // namespace rainnas::search
