#include "retrain.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

#include "error.hpp"
#include "optim.hpp"
#include "random.hpp"

namespace rainnas::train {

void TrainConfig::validate() const {
    require(lr > 0, "train: learning rate must be positive");
    require(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1, "train: Adam betas must lie in [0, 1)");
    require(batch_size >= 1, "train: batch size must be positive");
    require(epochs >= 1, "train: epochs must be positive");
    require(c_h >= 0, "train: c_H must be non-negative");
    require(eps > 0, "train: epsilon must be positive");
    require(tau > 0, "train: tau must be positive");
}

std::string history_csv_row(const EpochRecord& r) {
    char buf[320];
    if (r.val_valid)
        std::snprintf(buf, sizeof buf, "%zu,%.10g,%s", r.epoch, r.train_loss, verify::report_csv_row(r.val).c_str());
    else
        std::snprintf(buf, sizeof buf, "%zu,%.10g,nan,nan,nan,nan,nan,nan", r.epoch, r.train_loss);
    return buf;
}

verify::Report evaluate_model(Model& model, std::span<const data::GridSample> samples) {
    require(!samples.empty(), "evaluate: no samples");
    auto preds = model.predict(samples);
    std::vector<double> p, o;
    for (std::size_t s = 0; s < samples.size(); ++s) {
        p.insert(p.end(), preds[s].begin(), preds[s].end());
        o.insert(o.end(), samples[s].observation.begin(), samples[s].observation.end());
    }
    return verify::evaluate(p, o);
}

TrainResult retrain(const nas::ArchChoice& arch, const data::Split& split, const nas::NetworkConfig& net_cfg,
                    const TrainConfig& cfg, const grad::ParamStore* init, const EpochCallback& on_epoch) {
    cfg.validate();
    const auto& train = split.train.samples;
    if (train.empty()) fail(ErrorKind::InvalidArgument, "retrain: empty training split");
    require(split.train.channels == net_cfg.in_channels, "retrain: dataset channels do not match network");

    auto norm = Normalizer::fit(train);
    nas::Supernet net = init ? nas::Supernet(net_cfg, nas::Supernet(net_cfg, init->clone()).subset_for(arch))
                             : nas::Supernet(net_cfg, cfg.seed, arch);
    TrainResult result{Model(arch, std::move(net), norm), {}, split.warnings};
    auto& model = result.model;
    auto& params = model.net.params();

    grad::Adam opt({cfg.lr, cfg.beta1, cfg.beta2});
    Rng rng = derive_rng(cfg.seed, 0x7a1);
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    bool warned_degenerate = false;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
        double loss_sum = 0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            std::span<const std::size_t> idx(order.data() + start, end - start);
            auto x = batch_input(train, idx, net_cfg.in_channels, net_cfg.grid_h, net_cfg.grid_w, norm);
            auto y = batch_target(train, idx);
            params.zero_grad();
            auto pred = to_mm(model.net.forward(x, arch, {grad::NormMode::Train, true}), norm);
            bool degenerate = false;
            auto loss = composite_loss(pred, y, cfg.c_h, cfg.eps, cfg.tau, &degenerate);
            if (degenerate && !warned_degenerate) {
                result.warnings.push_back("epoch " + std::to_string(epoch) +
                                          ": soft HSS denominator vanished in a batch; term clamped to epsilon");
                warned_degenerate = true;
            }
            const double lv = loss.item();
            if (!std::isfinite(lv)) fail(ErrorKind::Numeric, "retrain: non-finite loss at epoch " + std::to_string(epoch));
            grad::backward(loss);
            opt.step(params);
            loss_sum += lv;
            ++batches;
        }
        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / static_cast<double>(batches);
        if (!split.val.samples.empty()) {
            try {
                rec.val = evaluate_model(model, split.val.samples);
                rec.val_valid = true;
            } catch (const Error& e) {
                if (e.kind() != ErrorKind::Numeric) throw;
            }
        }
        result.history.push_back(rec);
        if (on_epoch) on_epoch(rec);
    }
    return result;
}

}  // namespace rainnas::train
