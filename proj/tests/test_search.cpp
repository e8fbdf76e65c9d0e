#include <doctest.h>

#include <algorithm>
#include <chrono>
#include <cmath>

#include "error.hpp"
#include "search.hpp"
#include "test_util.hpp"

using namespace rainnas;
using namespace rainnas::grad;
using namespace rainnas::nas;
using namespace rainnas::search;
using testutil::random_tensor;

namespace {

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

NetworkConfig tiny_net(std::size_t blocks) {
    NetworkConfig c;
    c.in_channels = 4;
    c.feature_width = 4;
    c.num_blocks = blocks;
    c.projector_pool = 2;
    return c;
}

SearchConfig tiny_search(std::size_t blocks) {
    SearchConfig s;
    s.epochs = 4 * blocks;
    s.blocks = blocks;
    s.u = 2;
    s.batch_size = 4;
    s.crop = 16;
    s.lr = 1e-3;
    s.batches_per_epoch = 2;
    return s;
}

std::vector<std::vector<double>> snapshot(const ParamStore& p) {
    std::vector<std::vector<double>> out;
    for (const auto& e : p.entries()) out.push_back(values(e.tensor));
    return out;
}

bool carries_grad(const ParamStore& p) {
    for (const auto& e : p.entries()) {
        if (e.tensor.requires_grad()) return true;
        if (e.tensor.has_grad())
            for (double g : e.tensor.grad())
                if (g != 0.0) return true;
    }
    return false;
}

}  // namespace

TEST_CASE("schedule: phases and scheduled blocks") {
    std::vector<std::size_t> blocks;
    for (std::size_t t = 0; t < 24; ++t) blocks.push_back(theta_block(t, 24, 4));
    for (std::size_t t = 0; t < 24; ++t) CHECK(blocks[t] == t / 6 + 1);
    CHECK(std::count(blocks.begin(), blocks.end(), 1) == 6);
    CHECK(std::count(blocks.begin(), blocks.end(), 4) == 6);

    std::vector<std::size_t> theta_epochs;
    for (std::size_t t = 0; t < 24; ++t)
        if (phase_for(t, 3) == Phase::Theta) theta_epochs.push_back(theta_block(t, 24, 4));
    CHECK(theta_epochs == std::vector<std::size_t>{1, 1, 2, 2, 3, 3, 4, 4});

    CHECK_THROWS_AS(theta_block(0, 3, 4), Error);
    CHECK_THROWS_AS(theta_block(24, 24, 4), Error);
    CHECK(std::string(phase_name(Phase::Theta)) == "theta");
    CHECK(std::string(phase_name(Phase::Weights)) == "W");
}

TEST_CASE("schedule: weight epoch count") {
    for (std::size_t u = 2; u <= 6; ++u)
        for (std::size_t epochs = 1; epochs <= 40; ++epochs) {
            std::size_t weights = 0;
            for (std::size_t t = 0; t < epochs; ++t) weights += phase_for(t, u) == Phase::Weights;
            CHECK(weights == epochs - (epochs + u - 1) / u);
        }
}

TEST_CASE("search config validation") {
    SearchConfig ok;
    CHECK_NOTHROW(ok.validate());
    auto bad = ok;
    bad.epochs = 3;
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = ok;
    bad.u = 1;
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = ok;
    bad.momentum = 1.0;
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = ok;
    bad.crop = 34;
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = ok;
    bad.batch_size = 0;
    CHECK_THROWS_AS(bad.validate(), Error);
    // A schedule that would address block N+1 is rejected before any work.
    auto data = data::generate_synthetic(4, data::Mode::Mmod, 1);
    auto net = tiny_net(4);
    auto cfg = tiny_search(4);
    cfg.epochs = 18;  // T // N = 4, so t = 16 schedules block 5
    CHECK_THROWS_AS(run_search(data.samples, net, cfg), Error);
    CHECK_THROWS_AS(run_search({}, net, tiny_search(4)), Error);
}

TEST_CASE("crops") {
    Rng rng(50);
    std::array<double, 10> ys{}, xs{};
    const int draws = 10000;
    for (int i = 0; i < draws; ++i) {
        auto o = random_offset(33, 33, 24, rng);
        REQUIRE(o.y <= 9);
        REQUIRE(o.x <= 9);
        ys[o.y] += 1;
        xs[o.x] += 1;
    }
    for (const auto* counts : {&ys, &xs}) {
        double chi2 = 0;
        for (double c : *counts) chi2 += (c - draws / 10.0) * (c - draws / 10.0) / (draws / 10.0);
        CHECK(chi2 < 27.88);  // 99.9% quantile, 9 degrees of freedom
    }

    std::vector<float> stack(2 * 4 * 5);
    for (std::size_t i = 0; i < stack.size(); ++i) stack[i] = static_cast<float>(i);
    auto window = crop_stack(stack, 2, 4, 5, {1, 2}, 2);
    CHECK(window == std::vector<double>{7, 8, 12, 13, 27, 28, 32, 33});
    auto whole = random_crop4(stack, 2, 4, 4 + 1, 4, rng);
    CHECK_THROWS_AS(random_offset(33, 33, 34, rng), Error);

    std::vector<float> grid(3 * 33 * 33);
    for (auto& v : grid) v = static_cast<float>(uniform(rng, 0, 10));
    for (const auto& view : random_crop4(grid, 3, 33, 33, 33, rng))
        CHECK(view == std::vector<double>(grid.begin(), grid.end()));
    CHECK(whole[0].size() == 2 * 4 * 4);
}

TEST_CASE("contrastive loss") {
    Rng rng(51);
    auto q1 = random_tensor({3, 5}, rng, -1, 1, true);
    auto q2 = random_tensor({3, 5}, rng, -1, 1, true);
    auto k1 = Tensor::from({3, 5}, values(q1), true);
    auto k2 = Tensor::from({3, 5}, values(q2), true);
    CHECK(contrastive_loss(q1, q2, k1, k2).item() == 0.0);
    auto shifted = values(q2);
    for (auto& v : shifted) v += 1.0;
    auto k2s = Tensor::from({3, 5}, shifted, true);
    auto loss = contrastive_loss(q1, q2, k1, k2s);
    CHECK(loss.item() == doctest::Approx(1.0).epsilon(1e-14));
    backward(loss);
    CHECK(q2.has_grad());
    CHECK_FALSE(k1.has_grad());
    CHECK_FALSE(k2s.has_grad());
    CHECK_THROWS_AS(contrastive_loss(q1, q2, Tensor::zeros({3, 4}), k2), Error);
}

TEST_CASE("ema endpoints and example") {
    ParamStore target, online;
    target.add("w", Tensor::full({3}, 1.0));
    target.add("b.running_mean", Tensor::full({1}, 4.0), false);
    online.add("w", Tensor::from({3}, {0.0, 2.0, -5.0}));
    online.add("b.running_mean", Tensor::full({1}, 2.0), false);

    auto keep = target.clone();
    ema_sync(keep, online, 1.0);
    CHECK(values(keep.at("w")) == std::vector<double>{1, 1, 1});
    auto copy = target.clone();
    ema_sync(copy, online, 0.0);
    CHECK(values(copy.at("w")) == values(online.at("w")));
    CHECK(copy.at("b.running_mean")[0] == 2.0);

    ema_sync(target, online, 0.99);
    CHECK(target.at("w")[0] == doctest::Approx(0.99).epsilon(1e-15));
    CHECK(target.at("w")[1] == doctest::Approx(1.01).epsilon(1e-15));
    CHECK(target.at("b.running_mean")[0] == doctest::Approx(3.98).epsilon(1e-15));

    CHECK_THROWS_AS(ema_sync(target, online, 1.5), Error);
    ParamStore other;
    other.add("v", Tensor::zeros({3}));
    other.add("b.running_mean", Tensor::zeros({1}), false);
    CHECK_THROWS_AS(ema_sync(target, other, 0.5), Error);
}

TEST_CASE("target network: no gradient and convex hull over 100 steps") {
    auto data = data::generate_synthetic(16, data::Mode::Mmod, 2);
    auto net = tiny_net(2);
    auto cfg = tiny_search(2);
    cfg.momentum = 0.9;
    auto state = TwinState::create(net, cfg, data.samples);
    Rng rng(52);
    std::vector<std::vector<double>> theta_rows;
    for (const auto& r : state.theta.rows) theta_rows.push_back(values(r));

    // Track the per-element range of the online trajectory, initialization included.
    auto lo = snapshot(state.online.params()), hi = lo;
    for (int step = 0; step < 100; ++step) {
        std::span<const data::GridSample> batch(data.samples.data() + (step % 4) * 4, 4);
        search_step_weights(batch, state, cfg, rng);
        REQUIRE_FALSE(carries_grad(state.target.params()));
        auto now = snapshot(state.online.params());
        for (std::size_t i = 0; i < now.size(); ++i)
            for (std::size_t k = 0; k < now[i].size(); ++k) {
                lo[i][k] = std::min(lo[i][k], now[i][k]);
                hi[i][k] = std::max(hi[i][k], now[i][k]);
            }
        auto target = snapshot(state.target.params());
        bool inside = true;
        for (std::size_t i = 0; i < target.size(); ++i)
            for (std::size_t k = 0; k < target[i].size(); ++k) {
                const double slack = 1e-12 * std::max(1.0, std::abs(target[i][k]));
                inside = inside && target[i][k] >= lo[i][k] - slack && target[i][k] <= hi[i][k] + slack;
            }
        REQUIRE(inside);
    }
    for (std::size_t b = 0; b < theta_rows.size(); ++b) CHECK(values(state.theta.rows[b]) == theta_rows[b]);
    CHECK(snapshot(state.online.params()) != snapshot(state.target.params()));
}

TEST_CASE("theta steps touch only the scheduled row") {
    auto data = data::generate_synthetic(12, data::Mode::Mmod, 3);
    auto net = tiny_net(4);
    auto cfg = tiny_search(4);
    cfg.epochs = 24;
    cfg.theta_lr = 0.1;
    auto state = TwinState::create(net, cfg, data.samples);
    Rng rng(53);
    std::span<const data::GridSample> batch(data.samples.data(), 4);
    search_step_weights(batch, state, cfg, rng);  // online and target now differ

    for (std::size_t t : {0u, 6u, 9u, 18u, 21u}) {
        const std::size_t scheduled = theta_block(t, cfg.epochs, cfg.blocks) - 1;
        const auto online = snapshot(state.online.params());
        const auto target = snapshot(state.target.params());
        std::vector<std::vector<double>> rows;
        for (const auto& r : state.theta.rows) rows.push_back(values(r));
        for (int rep = 0; rep < 3; ++rep) search_step_theta(batch, state, cfg, t, rng);
        CHECK(snapshot(state.online.params()) == online);
        CHECK(snapshot(state.target.params()) == target);
        for (std::size_t b = 0; b < rows.size(); ++b) {
            INFO("t " << t << " block " << b);
            if (b == scheduled)
                CHECK(values(state.theta.rows[b]) != rows[b]);
            else
                CHECK(values(state.theta.rows[b]) == rows[b]);
        }
    }
}

TEST_CASE("search is deterministic and logs every epoch") {
    auto data = data::generate_synthetic(10, data::Mode::Mmod, 4);
    auto net = tiny_net(2);
    auto cfg = tiny_search(2);
    cfg.seed = 7;
    std::vector<std::string> rows;
    auto a = run_search(data.samples, net, cfg, {}, [&](const EpochLog& e) { rows.push_back(log_csv_row(e)); });
    auto b = run_search(data.samples, net, cfg);
    CHECK(a.arch == b.arch);
    CHECK(a.theta == b.theta);
    CHECK(snapshot(a.online) == snapshot(b.online));
    CHECK(a.arch.ops.size() == 2);
    REQUIRE(a.log.size() == cfg.epochs);
    REQUIRE(rows.size() == cfg.epochs);
    CHECK(rows[0].starts_with("0,theta,1,"));
    CHECK(rows[1].starts_with("1,W,0,"));
    CHECK(rows[4].starts_with("4,theta,2,"));
    for (const auto& e : a.log) CHECK(std::isfinite(e.loss));

    cfg.supervised = true;
    auto s = run_search(data.samples, net, cfg);
    CHECK(s.arch.ops.size() == 2);
    for (const auto& e : s.log) CHECK(std::isfinite(e.loss));
}

// One block. RB is frozen with large batchnorm gains and SAB with a fully open
// gate (identity). Both pass more crop-to-crop variation than CAB, whose
// attention factor shrinks typical pixels to about 0.62, so every pair involving
// them has a higher expected contrastive loss than (CAB, CAB).
TEST_CASE("rigged search recovers the channel attention block") {
    auto data = data::generate_synthetic(64, data::Mode::Mmod, 5);
    NetworkConfig net = tiny_net(1);
    net.feature_width = 8;
    SearchConfig cfg;
    cfg.epochs = 64;  // 32 theta epochs of 8 steps: the score-function estimate needs a few hundred draws
    cfg.blocks = 1;
    cfg.u = 2;
    cfg.batch_size = 8;
    cfg.crop = 24;
    cfg.theta_lr = 0.05;

    auto rig = [](TwinState& s) {
        Rng rng(99);
        auto& p = s.online.params();
        for (const char* name : {"blocks.0.RB.bn1.gamma", "blocks.0.RB.bn2.gamma"})
            for (auto& v : p.at(name).mutable_data()) v = uniform(rng, -2.0, 2.0);
        for (auto& v : p.at("blocks.0.SAB.conv.weight").mutable_data()) v = 0.0;
        p.at("blocks.0.SAB.conv.bias").mutable_data()[0] = 50.0;
        s.online.set_op_trainable(0, OpKind::RB, false);
        s.online.set_op_trainable(0, OpKind::SAB, false);
    };

    const auto start = std::chrono::steady_clock::now();
    int wins = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        cfg.seed = seed;
        auto r = run_search(data.samples, net, cfg, rig);
        MESSAGE("seed " << seed << ": " << r.arch.to_string() << " logits " << r.theta[0][0] << " " << r.theta[0][1]
                        << " " << r.theta[0][2]);
        wins += r.arch == ArchChoice{{OpKind::CAB}};
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    CHECK(wins >= 9);
    CHECK(seconds < 300.0);
}
