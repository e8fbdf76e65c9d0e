#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "baselines.hpp"
#include "error.hpp"
#include "retrain.hpp"

using namespace rainnas;
using namespace rainnas::train;
using nas::ArchChoice;
using nas::OpKind;

namespace {

nas::NetworkConfig small_net(std::size_t channels) {
    nas::NetworkConfig c;
    c.in_channels = channels;
    c.feature_width = 8;
    c.num_blocks = 2;
    c.projector_pool = 4;
    return c;
}

const ArchChoice kArch{{OpKind::CAB, OpKind::RB}};

std::vector<std::uint8_t> checkpoint_bytes(const Model& m) {
    auto store = m.net.params().clone();
    m.norm.store(store);
    return grad::encode_checkpoint(store);
}

}  // namespace

TEST_CASE("normalizer fit and storage") {
    data::GridSample a, b;
    a.ensemble = {3.0f, 4.0f};
    b.ensemble = {0.0f, 0.0f};
    a.observation = {1.0f, 3.0f};
    b.observation = {1.0f, 3.0f};
    std::vector<data::GridSample> s{a, b};
    auto n = Normalizer::fit(s);
    CHECK(n.input_scale == doctest::Approx(std::sqrt(25.0 / 4.0)));
    CHECK(n.output_mean == doctest::Approx(2.0));
    CHECK(n.output_scale == doctest::Approx(1.0));

    grad::ParamStore store;
    n.store(store);
    auto back = Normalizer::load(store);
    CHECK(back.input_scale == n.input_scale);
    CHECK(back.output_mean == n.output_mean);
    CHECK(back.output_scale == n.output_scale);
    for (const auto& e : store.entries()) CHECK_FALSE(e.trainable);
    CHECK_THROWS_AS(Normalizer::load(grad::ParamStore{}), Error);
    CHECK_THROWS_AS(Normalizer::fit({}), Error);
}

TEST_CASE("batches and unit maps") {
    auto d = data::generate_synthetic(3, data::Mode::Mmod, 8);
    Normalizer n{2.0, 1.0, 4.0};
    std::vector<std::size_t> idx{2, 0};
    auto x = batch_input(d.samples, idx, 4, 33, 33, n);
    CHECK(x.shape() == grad::Shape{2, 4, 33, 33});
    CHECK(x[5] == doctest::Approx(d.samples[2].ensemble[5] / 2.0));
    auto y = batch_target(d.samples, idx);
    CHECK(y.shape() == grad::Shape{2, 1089});
    CHECK(y[1089 + 7] == d.samples[0].observation[7]);
    auto mm = to_mm(grad::Tensor::from({1, 2}, {0.5, -1.0}), n);
    CHECK(mm[0] == 3.0);
    CHECK(mm[1] == -3.0);
}

TEST_CASE("network shape inference") {
    auto cfg = small_net(4);
    cfg.projector_pool = 3;
    nas::Supernet net(cfg, 1);
    auto got = infer_config(net.params(), 2);
    CHECK(got.in_channels == 4);
    CHECK(got.feature_width == 8);
    CHECK(got.projector_pool == 3);
    CHECK(got.num_blocks == 2);
}

TEST_CASE("retrain is deterministic and records finite history") {
    auto split = data::split_timeline(data::generate_synthetic(24, data::Mode::Mmod, 9));
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 8;
    cfg.lr = 1e-3;
    cfg.seed = 5;
    std::vector<std::string> rows;
    auto a = retrain(kArch, split, small_net(4), cfg, nullptr,
                     [&](const EpochRecord& r) { rows.push_back(history_csv_row(r)); });
    auto b = retrain(kArch, split, small_net(4), cfg);
    CHECK(checkpoint_bytes(a.model) == checkpoint_bytes(b.model));
    REQUIRE(a.history.size() == 3);
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].starts_with("1,"));
    for (const auto& r : a.history) {
        CHECK(std::isfinite(r.train_loss));
        CHECK(r.val_valid);
        CHECK(std::isfinite(r.val.mae));
    }
    cfg.seed = 6;
    auto c = retrain(kArch, split, small_net(4), cfg);
    CHECK(checkpoint_bytes(c.model) != checkpoint_bytes(a.model));

    cfg.c_h = 10;
    auto h = retrain(kArch, split, small_net(4), cfg);
    for (const auto& r : h.history) CHECK(std::isfinite(r.train_loss));
}

TEST_CASE("retrain errors") {
    auto split = data::split_timeline(data::generate_synthetic(12, data::Mode::Mmod, 10));
    TrainConfig cfg;
    cfg.epochs = 1;
    data::Split empty;
    empty.train.channels = 4;
    CHECK_THROWS_AS(retrain(kArch, empty, small_net(4), cfg), Error);
    CHECK_THROWS_AS(retrain(kArch, split, small_net(50), cfg), Error);
    CHECK_THROWS_AS(retrain(ArchChoice{{OpKind::CAB}}, split, small_net(4), cfg), Error);
    cfg.lr = 0;
    CHECK_THROWS_AS(retrain(kArch, split, small_net(4), cfg), Error);
}

TEST_CASE("checkpoints reproduce predictions; searched weights seed the model") {
    auto split = data::split_timeline(data::generate_synthetic(20, data::Mode::Mmod, 11));
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 8;
    nas::Supernet searched(small_net(4), 3);
    auto r = retrain(kArch, split, small_net(4), cfg, &searched.params());
    const auto path = std::filesystem::temp_directory_path() / "rainnas_test_model.adnw";
    r.model.save(path);
    auto loaded = Model::load(path, kArch);
    std::filesystem::remove(path);
    auto p1 = r.model.predict(split.val.samples);
    auto p2 = loaded.predict(split.val.samples);
    CHECK(p1 == p2);
    for (const auto& grid : p1)
        for (double v : grid) CHECK(v >= 0.0);
    CHECK(loaded.norm.input_scale == r.model.norm.input_scale);
    CHECK_THROWS_AS(Model::load(path, kArch), Error);
}

TEST_CASE("200-sample run beats the ensemble mean") {
    auto split = data::split_timeline(data::generate_synthetic(200, data::Mode::Mmod, 12));
    TrainConfig cfg;
    cfg.epochs = 30;
    cfg.batch_size = 16;
    cfg.lr = 1e-3;
    cfg.beta2 = 0.99;
    cfg.seed = 1;
    auto net = small_net(4);
    auto r = retrain(ArchChoice{{OpKind::CAB, OpKind::CAB}}, split, net, cfg);

    std::vector<double> em, obs;
    for (const auto& s : split.val.samples) {
        std::vector<double> stack(s.ensemble.begin(), s.ensemble.end());
        auto m = baselines::ensemble_mean(stack, 4, data::kGridPixels);
        em.insert(em.end(), m.begin(), m.end());
        obs.insert(obs.end(), s.observation.begin(), s.observation.end());
    }
    const double em_mae = verify::mae(em, obs);
    const double model_mae = r.history.back().val.mae;
    MESSAGE("EM MAE " << em_mae << ", model MAE " << model_mae);
    CHECK(model_mae < em_mae);
}
