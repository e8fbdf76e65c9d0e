#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "losses.hpp"
#include "metrics.hpp"
#include "model.hpp"

namespace rainnas::train {

struct TrainConfig {
    double lr = 2.5e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    std::size_t batch_size = 64;
    std::size_t epochs = 300;
    double c_h = 0.0;
    double eps = kHssEpsilon;
    double tau = kDefaultTau;
    std::uint64_t seed = 0;

    void validate() const;
};

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0;
    verify::Report val;
    bool val_valid = false;  // false when the validation split is empty or a metric is undefined
};

inline constexpr const char* kHistoryHeader = "epoch,train_loss,val_bias,val_mae,val_rmse,val_nse,val_acc,val_hss";
std::string history_csv_row(const EpochRecord& r);

struct TrainResult {
    Model model;
    std::vector<EpochRecord> history;
    std::vector<std::string> warnings;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Supervised training of `arch` on split.train; validation metrics on
// split.val after every epoch. Weights start from `init` when given
// (e.g. searched online weights), otherwise fresh from cfg.seed.
TrainResult retrain(const nas::ArchChoice& arch, const data::Split& split, const nas::NetworkConfig& net_cfg,
                    const TrainConfig& cfg, const grad::ParamStore* init = nullptr,
                    const EpochCallback& on_epoch = {});

// Pooled validation report of `model` on `samples`.
verify::Report evaluate_model(Model& model, std::span<const data::GridSample> samples);

}  // namespace rainnas::train
