#include "search.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

#include "error.hpp"
#include "ops.hpp"

namespace rainnas::search {

using nas::ArchChoice;

void SearchConfig::validate() const {
    require(blocks >= 1, "search: need at least one block");
    require(epochs >= blocks, "search: epochs (T) must be at least blocks (N)");
    require(u >= 2, "search: u must be at least 2");
    require(momentum > 0 && momentum < 1, "search: momentum must lie in (0, 1)");
    require(batch_size >= 1, "search: batch size must be positive");
    require(lr > 0 && theta_lr > 0, "search: learning rates must be positive");
    require(crop >= 4 && crop <= 33, "search: crop must lie in [4, 33]");
}

const char* phase_name(Phase p) { return p == Phase::Theta ? "theta" : "W"; }

Phase phase_for(std::size_t t, std::size_t u) { return t % u == 0 ? Phase::Theta : Phase::Weights; }

std::size_t theta_block(std::size_t t, std::size_t epochs, std::size_t blocks) {
    const std::size_t per = epochs / blocks;
    if (per == 0) fail(ErrorKind::InvalidArgument, "search: T // N is zero");
    const std::size_t i = t / per + 1;
    if (i > blocks)
        fail(ErrorKind::InvalidArgument, "search: epoch " + std::to_string(t) + " schedules block " +
                                             std::to_string(i) + " of " + std::to_string(blocks));
    return i;
}

CropOffset random_offset(std::size_t h, std::size_t w, std::size_t crop, Rng& rng) {
    if (crop > h || crop > w)
        fail(ErrorKind::InvalidArgument, "crop " + std::to_string(crop) + " exceeds grid " + std::to_string(h) + "x" +
                                             std::to_string(w));
    const std::size_t y = uniform_index(rng, h - crop + 1);
    const std::size_t x = uniform_index(rng, w - crop + 1);
    return {y, x};
}

std::vector<double> crop_stack(std::span<const float> stack, std::size_t c, std::size_t h, std::size_t w,
                               CropOffset at, std::size_t crop) {
    require(stack.size() == c * h * w, "crop: stack size does not match extent");
    require(at.y + crop <= h && at.x + crop <= w, "crop: window leaves the grid");
    std::vector<double> out(c * crop * crop);
    for (std::size_t k = 0; k < c; ++k)
        for (std::size_t y = 0; y < crop; ++y)
            for (std::size_t x = 0; x < crop; ++x)
                out[(k * crop + y) * crop + x] = stack[(k * h + at.y + y) * w + at.x + x];
    return out;
}

std::array<std::vector<double>, 4> random_crop4(std::span<const float> stack, std::size_t c, std::size_t h,
                                                std::size_t w, std::size_t crop, Rng& rng) {
    std::array<std::vector<double>, 4> out;
    for (auto& v : out) v = crop_stack(stack, c, h, w, random_offset(h, w, crop, rng), crop);
    return out;
}

Tensor contrastive_loss(const Tensor& q1, const Tensor& q2, const Tensor& k1, const Tensor& k2) {
    if (q1.shape() != k1.shape() || q2.shape() != k2.shape())
        fail(ErrorKind::InvalidArgument, "contrastive_loss: embedding shapes differ (" + q1.shape_string() + " vs " +
                                             k1.shape_string() + ", " + q2.shape_string() + " vs " +
                                             k2.shape_string() + ")");
    return grad::add(grad::mse_loss(q1, k1.detach()), grad::mse_loss(q2, k2.detach()));
}

void ema_sync(grad::ParamStore& target, const grad::ParamStore& online, double m) {
    require(m >= 0 && m <= 1, "ema_sync: momentum must lie in [0, 1]");
    if (target.size() != online.size())
        fail(ErrorKind::InvalidArgument, "ema_sync: parameter counts differ (" + std::to_string(target.size()) +
                                             " vs " + std::to_string(online.size()) + ")");
    auto& te = target.entries();
    const auto& oe = online.entries();
    for (std::size_t i = 0; i < te.size(); ++i)
        if (te[i].name != oe[i].name || te[i].tensor.shape() != oe[i].tensor.shape())
            fail(ErrorKind::InvalidArgument, "ema_sync: structure mismatch at " + te[i].name + " / " + oe[i].name);
    for (std::size_t i = 0; i < te.size(); ++i) {
        auto t = te[i].tensor.mutable_data();
        auto o = oe[i].tensor.data();
        for (std::size_t k = 0; k < t.size(); ++k) t[k] = m * t[k] + (1.0 - m) * o[k];
    }
}

namespace {

grad::ParamStore frozen_copy(const grad::ParamStore& src) {
    auto copy = src.clone();
    for (auto& e : copy.entries()) e.tensor.set_requires_grad(false);
    return copy;
}

struct CropBatch {
    std::array<Tensor, 4> views;  // x1, x2, x1', x2'
};

CropBatch make_crops(std::span<const data::GridSample> batch, const nas::NetworkConfig& net, std::size_t crop,
                     const train::Normalizer& norm, Rng& rng) {
    const std::size_t c = net.in_channels, per = c * crop * crop;
    std::array<std::vector<double>, 4> buf;
    for (auto& b : buf) b.resize(batch.size() * per);
    for (std::size_t s = 0; s < batch.size(); ++s) {
        require(batch[s].ensemble.size() == c * net.grid_h * net.grid_w, "search: sample ensemble size mismatch");
        auto four = random_crop4(batch[s].ensemble, c, net.grid_h, net.grid_w, crop, rng);
        for (std::size_t v = 0; v < 4; ++v)
            for (std::size_t k = 0; k < per; ++k) buf[v][s * per + k] = four[v][k] / norm.input_scale;
    }
    CropBatch out;
    for (std::size_t v = 0; v < 4; ++v) out.views[v] = Tensor::from({batch.size(), c, crop, crop}, std::move(buf[v]));
    return out;
}

Tensor normalized_target(std::span<const data::GridSample> batch, const train::Normalizer& norm) {
    std::vector<std::size_t> idx(batch.size());
    std::iota(idx.begin(), idx.end(), 0);
    auto y = train::batch_target(batch, idx);
    auto v = y.mutable_data();
    for (auto& x : v) x = (x - norm.output_mean) / norm.output_scale;
    return y;
}

Tensor full_input(std::span<const data::GridSample> batch, const nas::NetworkConfig& net,
                  const train::Normalizer& norm) {
    std::vector<std::size_t> idx(batch.size());
    std::iota(idx.begin(), idx.end(), 0);
    return train::batch_input(batch, idx, net.in_channels, net.grid_h, net.grid_w, norm);
}

// Loss of the (a1 online, a2 target) pair. Gradients flow into the online
// weights only when grad mode is on.
Tensor pair_loss(std::span<const data::GridSample> batch, TwinState& state, const SearchConfig& cfg,
                 const ArchChoice& a1, const ArchChoice& a2, nas::ForwardMode online_mode, Rng& rng) {
    const auto& net = state.online.config();
    if (cfg.supervised) {
        auto x = full_input(batch, net, state.norm);
        auto y = normalized_target(batch, state.norm);
        return grad::add(grad::mse_loss(state.online.forward(x, a1, online_mode), y),
                         grad::mse_loss(state.online.forward(x, a2, online_mode), y));
    }
    auto crops = make_crops(batch, net, cfg.crop, state.norm, rng);
    auto q1 = state.online.forward(crops.views[0], a1, online_mode);
    auto q2 = state.online.forward(crops.views[1], a1, online_mode);
    Tensor k1, k2;
    {
        grad::NoGradGuard guard;
        const nas::ForwardMode target_mode{grad::NormMode::Train, false};
        k1 = state.target.forward(crops.views[2], a2, target_mode);
        k2 = state.target.forward(crops.views[3], a2, target_mode);
    }
    return contrastive_loss(q1, q2, k1, k2);
}

}  // namespace

TwinState TwinState::create(const nas::NetworkConfig& net, const SearchConfig& cfg,
                            std::span<const data::GridSample> train) {
    require(net.num_blocks == cfg.blocks, "search: network block count differs from search config");
    nas::Supernet online(net, cfg.seed);
    nas::Supernet target(net, frozen_copy(online.params()));
    Rng theta_rng = derive_rng(cfg.seed, 0x7e7a);
    return TwinState{std::move(online),
                     std::move(target),
                     nas::ArchParams::random(cfg.blocks, theta_rng),
                     grad::Adam({cfg.lr}),
                     grad::Adam({cfg.theta_lr}),
                     train::Normalizer::fit(train),
                     0.0,
                     false};
}

void TwinState::resync_target() { target = nas::Supernet(online.config(), frozen_copy(online.params())); }

double search_step_weights(std::span<const data::GridSample> batch, TwinState& state, const SearchConfig& cfg,
                           Rng& rng) {
    require(!batch.empty(), "search: empty batch");
    const auto a1 = nas::sample_arch(state.theta, rng);
    const auto a2 = nas::sample_arch(state.theta, rng);
    auto& params = state.online.params();
    params.zero_grad();
    auto loss = pair_loss(batch, state, cfg, a1, a2, {grad::NormMode::Train, true}, rng);
    const double value = loss.item();
    if (!std::isfinite(value)) fail(ErrorKind::Numeric, "search: non-finite weight-phase loss");
    grad::backward(loss);
    state.weight_opt.step(params);
    ema_sync(state.target.params(), params, cfg.momentum);
    return value;
}

double search_step_theta(std::span<const data::GridSample> batch, TwinState& state, const SearchConfig& cfg,
                         std::size_t t, Rng& rng) {
    require(!batch.empty(), "search: empty batch");
    const std::size_t block = theta_block(t, cfg.epochs, cfg.blocks) - 1;
    const auto probs = state.theta.probs(block);
    ArchChoice a1 = nas::derive_arch(state.theta), a2 = a1;
    a1.ops[block] = nas::kAllOps[sample_categorical(rng, probs)];
    a2.ops[block] = nas::kAllOps[sample_categorical(rng, probs)];

    double value = 0;
    {
        grad::NoGradGuard guard;
        value = pair_loss(batch, state, cfg, a1, a2, {grad::NormMode::Train, false}, rng).item();
    }
    if (!std::isfinite(value)) fail(ErrorKind::Numeric, "search: non-finite theta-phase loss");
    if (!state.has_baseline) {
        state.baseline = value;
        state.has_baseline = true;
    }
    // Score-function gradient: sum over both samples of (onehot - p) * (L - b).
    const double advantage = value - state.baseline;
    auto& row = state.theta.rows[block];
    row.zero_grad();
    auto g = row.mutable_grad();
    for (const auto* a : {&a1, &a2})
        for (std::size_t k = 0; k < nas::kNumOps; ++k)
            g[k] += ((static_cast<std::size_t>(a->ops[block]) == k ? 1.0 : 0.0) - probs[k]) * advantage;
    state.theta_opt.step(row, "theta." + std::to_string(block));
    state.baseline = 0.9 * state.baseline + 0.1 * value;
    return value;
}

std::string log_csv_row(const EpochLog& e) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%zu,%s,%zu,%.10g", e.epoch, phase_name(e.phase), e.block, e.loss);
    return buf;
}

SearchResult run_search(std::span<const data::GridSample> train, const nas::NetworkConfig& net, const SearchConfig& cfg,
                        const std::function<void(TwinState&)>& prepare,
                        const std::function<void(const EpochLog&)>& on_epoch) {
    cfg.validate();
    if (train.empty()) fail(ErrorKind::InvalidArgument, "search: empty training set");
    for (std::size_t t = 0; t < cfg.epochs; ++t)
        if (phase_for(t, cfg.u) == Phase::Theta) theta_block(t, cfg.epochs, cfg.blocks);
    auto state = TwinState::create(net, cfg, train);
    if (prepare) {
        prepare(state);
        state.resync_target();
    }
    Rng rng = derive_rng(cfg.seed, 0x5ea);
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<data::GridSample> batch;
    SearchResult result;

    for (std::size_t t = 0; t < cfg.epochs; ++t) {
        const Phase phase = phase_for(t, cfg.u);
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
        double sum = 0;
        std::size_t steps = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            if (cfg.batches_per_epoch && steps == cfg.batches_per_epoch) break;
            batch.clear();
            for (std::size_t k = start; k < std::min(order.size(), start + cfg.batch_size); ++k)
                batch.push_back(train[order[k]]);
            sum += phase == Phase::Theta ? search_step_theta(batch, state, cfg, t, rng)
                                         : search_step_weights(batch, state, cfg, rng);
            ++steps;
        }
        EpochLog e{t, phase, phase == Phase::Theta ? theta_block(t, cfg.epochs, cfg.blocks) : 0,
                   sum / static_cast<double>(steps)};
        result.log.push_back(e);
        if (on_epoch) on_epoch(e);
    }
    result.arch = nas::derive_arch(state.theta);
    for (const auto& row : state.theta.rows) result.theta.emplace_back(row.data().begin(), row.data().end());
    result.online = state.online.params().clone();
    return result;
}

}  // namespace rainnas::search
