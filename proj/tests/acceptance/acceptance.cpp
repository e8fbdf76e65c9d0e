// Acceptance harness: one PASS/FAIL line per criterion, exit status 1 when any
// criterion fails. `--only 1,2` restricts the run.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "baselines.hpp"
#include "blocks.hpp"
#include "dataset.hpp"
#include "dm.hpp"
#include "error.hpp"
#include "losses.hpp"
#include "metrics.hpp"
#include "oracles.hpp"
#include "retrain.hpp"
#include "search.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace rainnas;
using namespace rainnas::grad;
using testutil::grad_check;
using testutil::random_tensor;
using testutil::weighted_sum;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

// Collects failures; the first few are reported.
struct Verdict {
    std::vector<std::string> failures;
    std::string summary;
    void expect(bool ok, const std::string& what) {
        if (!ok) failures.push_back(what);
    }
    bool passed() const { return failures.empty(); }
};

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

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

// ---- 1: gradient suite ----------------------------------------------------

Verdict gradients() {
    Verdict v;
    const auto t0 = Clock::now();
    Rng rng(101);
    constexpr int kInstances = 20;
    auto check = [&](const char* name, const std::function<Tensor()>& f, std::vector<Tensor> leaves) {
        auto r = grad_check(f, std::move(leaves));
        v.expect(r.ok, std::string(name) + ": " + r.detail);
    };
    for (int it = 0; it < kInstances; ++it) {
        {
            auto x = random_tensor({2, 2, 5, 5}, rng, -1, 1, true);
            auto w = random_tensor({3, 2, 3, 3}, rng, -1, 1, true);
            auto b = random_tensor({3}, rng, -1, 1, true);
            const std::size_t stride = it % 2 ? 2 : 1;
            check("conv2d", [&] { return weighted_sum(conv2d(x, w, b, stride, 1)); }, {x, w, b});
        }
        {
            auto x = random_tensor({3, 2, 3, 3}, rng, -2, 2, true);
            auto g = random_tensor({2}, rng, 0.5, 1.5, true);
            auto b = random_tensor({2}, rng, -1, 1, true);
            auto stats = BatchNormStats::fresh(2);
            const NormMode mode = it % 2 ? NormMode::Eval : NormMode::Train;
            check("batchnorm2d", [&] { return weighted_sum(batchnorm2d(x, g, b, stats, mode, 1e-5, false)); },
                  {x, g, b});
        }
        {
            auto x = random_tensor({2, 3, 4, 4}, rng, -1, 1, true);
            auto m = random_tensor({2, 1, 4, 4}, rng, -1, 1, true);
            check("relu", [&] { return weighted_sum(relu(x)); }, {x});
            check("sigmoid", [&] { return weighted_sum(sigmoid(x)); }, {x});
            check("maxpool2d", [&] { return weighted_sum(maxpool2d(x, 2, 2)); }, {x});
            check("adaptive_avgpool2d", [&] { return weighted_sum(adaptive_avgpool2d(x, 3, 3)); }, {x});
            check("channel_mean_max", [&] { return weighted_sum(channel_mean_max(x)); }, {x});
            check("mul_channel_broadcast", [&] { return weighted_sum(mul_channel_broadcast(x, m)); }, {x, m});
        }
        {
            auto x = random_tensor({4, 6}, rng, -1, 1, true);
            auto w = random_tensor({6, 5}, rng, -1, 1, true);
            auto b = random_tensor({5}, rng, -1, 1, true);
            check("linear", [&] { return weighted_sum(linear(x, w, b)); }, {x, w, b});
        }
        {
            auto a = random_tensor({3, 4}, rng, -1, 1, true);
            auto b = random_tensor({3, 4}, rng, 0.5, 2, true);
            check("add", [&] { return weighted_sum(add(a, b)); }, {a, b});
            check("sub", [&] { return weighted_sum(sub(a, b)); }, {a, b});
            check("mul_elem", [&] { return weighted_sum(mul_elem(a, b)); }, {a, b});
            check("scale", [&] { return weighted_sum(scale(a, -1.7)); }, {a});
            check("reciprocal", [&] { return weighted_sum(reciprocal(b)); }, {b});
            check("clamp_min", [&] { return weighted_sum(clamp_min(a, 0.05)); }, {a});
            check("mean_all", [&] { return mean_all(mul_elem(a, b)); }, {a, b});
            check("sum_all", [&] { return sum_all(mul_elem(a, a)); }, {a});
            check("reshape", [&] { return weighted_sum(reshape(a, {4, 3})); }, {a});
            check("mse_loss", [&] { return mse_loss(a, b); }, {a, b});
        }
        {
            // Contrastive objective: gradients reach the online projections only.
            auto q1 = random_tensor({3, 6}, rng, -1, 1, true);
            auto q2 = random_tensor({3, 6}, rng, -1, 1, true);
            auto k1 = random_tensor({3, 6}, rng, -1, 1);
            auto k2 = random_tensor({3, 6}, rng, -1, 1);
            check("contrastive_loss", [&] { return search::contrastive_loss(q1, q2, k1, k2); }, {q1, q2});
        }
        {
            // Composite supervised loss on skilful predictions (soft HSS well above its floor).
            std::vector<double> obs(24), near(24);
            for (auto& x : obs) {
                const double r = uniform01(rng);
                x = r < 0.2 ? uniform(rng, 0.0, 0.3) : r < 0.7 ? uniform(rng, 0.1, 12.0) : uniform(rng, 9.0, 60.0);
            }
            for (std::size_t i = 0; i < near.size(); ++i) near[i] = std::max(0.0, obs[i] + 0.8 * standard_normal(rng));
            auto o = Tensor::from({2, 12}, obs);
            auto p = Tensor::from({2, 12}, near, true);
            for (double ch : {0.0, 10.0})
                check(ch == 0.0 ? "composite_loss c_H=0" : "composite_loss c_H=10",
                      [&] { return train::composite_loss(p, o, ch); }, {p});
        }
    }
    const double secs = seconds_since(t0);
    v.expect(secs < 60.0, "runtime " + fmt("%.1f", secs) + " s exceeds 60 s");
    v.summary = std::to_string(kInstances) + " instances per op, " + fmt("%.1f", secs) + " s";
    return v;
}

// ---- 2: metric oracles ----------------------------------------------------

Verdict metric_oracles() {
    Verdict v;
    using testutil::Oracle;
    auto close = [](double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(b)); };
    Rng rng(102);
    for (int trial = 0; trial < 1000; ++trial) {
        auto p = testutil::random_rain(data::kGridPixels, rng);
        auto o = testutil::random_rain(data::kGridPixels, rng);
        if (trial % 3 == 0)
            for (std::size_t i = 0; i < p.size(); ++i) p[i] = std::max(0.0, o[i] + uniform(rng, -3.0, 3.0));
        const auto r = verify::evaluate(p, o);
        const std::string at = " on grid " + std::to_string(trial);
        v.expect(close(r.bias, Oracle::bias(p, o)), "bias" + at);
        v.expect(close(r.mae, Oracle::mae(p, o)), "mae" + at);
        v.expect(close(r.rmse, Oracle::rmse(p, o)), "rmse" + at);
        v.expect(close(r.nse, Oracle::nse(p, o)), "nse" + at);
        v.expect(close(r.acc, Oracle::acc(p, o)), "acc" + at);
        v.expect(close(r.hss, Oracle::hss(p, o)), "hss" + at);
    }
    verify::ContingencyTable t;
    t.n[0][0] = 2;
    t.n[0][1] = 1;
    t.n[1][0] = 1;
    t.n[1][1] = 2;
    v.expect(verify::acc(t) == 4.0 / 6.0, "table example ACC " + fmt("%.17g", verify::acc(t)));
    v.expect(verify::hss(t) == 1.0 / 3.0, "table example HSS " + fmt("%.17g", verify::hss(t)));
    v.summary = "1000 grids to 1e-12, table example ACC 4/6 HSS 1/3";
    return v;
}

// ---- 3: channel attention -------------------------------------------------

Verdict channel_attention() {
    Verdict v;
    const double s05 = 1.0 / (1.0 + std::exp(-0.5));
    auto flat = nas::cab_forward(Tensor::full({1, 1, 3, 3}, 2.0));
    for (double x : flat.data()) v.expect(std::abs(x - 2.0 * s05) < 1e-5, "uniform plane " + fmt("%.8f", x));
    for (double w : nas::cab_weights(Tensor::full({1, 2, 2, 2}, -1.0)))
        v.expect(std::abs(w - 0.622459) < 1e-5, "uniform weight " + fmt("%.8f", w));
    auto spike = nas::cab_forward(Tensor::from({1, 1, 2, 2}, {2.0, 0.0, 0.0, 0.0}));
    v.expect(std::abs(spike[0] - 1.48632) < 1e-5, "spike value " + fmt("%.8f", spike[0]));
    for (std::size_t i = 1; i < 4; ++i) v.expect(spike[i] == 0.0, "spike zero entries");

    Rng rng(103);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t h = 2 + uniform_index(rng, 6), w = 2 + uniform_index(rng, 6);
        auto z = random_tensor({1, 1, h, w}, rng, -3.0, 3.0);
        const auto weights = nas::cab_weights(z);
        double mean = 0;
        for (double x : z.data()) mean += x;
        mean /= static_cast<double>(z.numel());
        std::size_t far = 0;
        for (std::size_t i = 1; i < z.numel(); ++i)
            if (std::abs(z[i] - mean) > std::abs(z[far] - mean)) far = i;
        const auto arg = static_cast<std::size_t>(std::max_element(weights.begin(), weights.end()) - weights.begin());
        v.expect(arg == far, "argmax weight on plane " + std::to_string(trial));
    }
    v.summary = "both examples to 1e-5, argmax monotone on 1000 planes";
    return v;
}

// ---- 4: schedule ----------------------------------------------------------

nas::NetworkConfig tiny_net(std::size_t blocks) {
    nas::NetworkConfig c;
    c.feature_width = 4;
    c.num_blocks = blocks;
    c.projector_pool = 2;
    return c;
}

Verdict schedule() {
    Verdict v;
    constexpr std::size_t T = 24, N = 4;
    for (std::size_t t = 0; t < T; ++t)
        v.expect(search::theta_block(t, T, N) == t / (T / N) + 1, "block index at t=" + std::to_string(t));

    auto data = data::generate_synthetic(16, data::Mode::Mmod, 104);
    search::SearchConfig cfg;
    cfg.epochs = T;
    cfg.blocks = N;
    cfg.u = 3;
    cfg.batch_size = 4;
    cfg.crop = 16;
    cfg.theta_lr = 0.1;
    auto state = search::TwinState::create(tiny_net(N), cfg, data.samples);
    Rng rng(104);
    std::span<const data::GridSample> batch(data.samples.data(), 4);
    search::search_step_weights(batch, state, cfg, rng);  // online and target differ from here on

    std::size_t phases = 0;
    for (std::size_t t = 0; t < T; ++t) {
        if (search::phase_for(t, cfg.u) != search::Phase::Theta) continue;
        ++phases;
        const std::size_t scheduled = search::theta_block(t, T, N) - 1;
        const auto online = snapshot(state.online.params()), target = snapshot(state.target.params());
        std::vector<std::vector<double>> rows;
        for (const auto& r : state.theta.rows) rows.push_back(values(r));
        for (std::size_t b = 0; b < 4; ++b)
            search::search_step_theta(std::span(data.samples.data() + 4 * b, 4), state, cfg, t, rng);
        const std::string at = " at t=" + std::to_string(t);
        v.expect(snapshot(state.online.params()) == online, "online weights changed" + at);
        v.expect(snapshot(state.target.params()) == target, "target weights changed" + at);
        for (std::size_t b = 0; b < rows.size(); ++b)
            if (b != scheduled) v.expect(values(state.theta.rows[b]) == rows[b], "unscheduled row moved" + at);
        v.expect(values(state.theta.rows[scheduled]) != rows[scheduled], "scheduled row did not move" + at);
    }
    v.summary = "T=24 N=4 sequence exact, " + std::to_string(phases) + " theta epochs bitwise clean";
    return v;
}

// ---- 5: EMA ---------------------------------------------------------------

Verdict ema() {
    Verdict v;
    auto data = data::generate_synthetic(16, data::Mode::Mmod, 105);
    search::SearchConfig cfg;
    cfg.epochs = 4;
    cfg.blocks = 2;
    cfg.u = 2;
    cfg.batch_size = 4;
    cfg.crop = 16;
    cfg.lr = 1e-3;
    cfg.momentum = 0.9;
    auto state = search::TwinState::create(tiny_net(2), cfg, data.samples);
    Rng rng(105);
    std::size_t steps = 0;
    for (int step = 0; step < 100; ++step) {
        std::span<const data::GridSample> batch(data.samples.data() + (step % 4) * 4, 4);
        search::search_step_weights(batch, state, cfg, rng);
        v.expect(!carries_grad(state.target.params()), "target carries gradient at step " + std::to_string(step));
        ++steps;
    }
    const auto online = snapshot(state.online.params()), target = snapshot(state.target.params());
    v.expect(online != target, "online and target coincide after training");
    auto keep = state.target.params().clone();
    search::ema_sync(keep, state.online.params(), 1.0);
    v.expect(snapshot(keep) == target, "m=1 did not keep the target");
    auto copy = state.target.params().clone();
    search::ema_sync(copy, state.online.params(), 0.0);
    v.expect(snapshot(copy) == online, "m=0 did not copy the online network");
    v.summary = "endpoints bitwise, no target gradient over " + std::to_string(steps) + " steps";
    return v;
}

// ---- 6: rigged search -----------------------------------------------------

Verdict rigged_search() {
    Verdict v;
    const auto t0 = Clock::now();
    auto data = data::generate_synthetic(64, data::Mode::Mmod, 5);
    nas::NetworkConfig net = tiny_net(1);
    net.feature_width = 8;
    search::SearchConfig cfg;
    cfg.epochs = 64;
    cfg.blocks = 1;
    cfg.u = 2;
    cfg.batch_size = 8;
    cfg.crop = 24;
    cfg.theta_lr = 0.05;
    // RB frozen with large batchnorm gains, SAB frozen with a fully open gate.
    auto rig = [](search::TwinState& s) {
        Rng rng(99);
        auto& p = s.online.params();
        for (const char* name : {"blocks.0.RB.bn1.gamma", "blocks.0.RB.bn2.gamma"})
            for (auto& x : p.at(name).mutable_data()) x = uniform(rng, -2.0, 2.0);
        for (auto& x : p.at("blocks.0.SAB.conv.weight").mutable_data()) x = 0.0;
        p.at("blocks.0.SAB.conv.bias").mutable_data()[0] = 50.0;
        s.online.set_op_trainable(0, nas::OpKind::RB, false);
        s.online.set_op_trainable(0, nas::OpKind::SAB, false);
    };
    int wins = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        cfg.seed = seed;
        wins += search::run_search(data.samples, net, cfg, rig).arch == nas::ArchChoice{{nas::OpKind::CAB}};
    }
    const double secs = seconds_since(t0);
    v.expect(wins >= 9, "CAB recovered in only " + std::to_string(wins) + "/10 seeds");
    v.expect(secs < 300.0, "runtime " + fmt("%.0f", secs) + " s exceeds 300 s");
    v.summary = std::to_string(wins) + "/10 seeds, " + fmt("%.0f", secs) + " s";
    return v;
}

// ---- 7 and 8: end-to-end skill --------------------------------------------

// Search and retraining settings for the 2000-sample run; see README.
struct EndToEnd {
    data::Split split;
    verify::Report em;
    nas::ArchChoice arch;
    double search_s = 0;
    std::optional<verify::Report> reg, plain;  // c_H = 10 and c_H = 0
    double reg_s = 0, plain_s = 0;

    nas::NetworkConfig net() const {
        nas::NetworkConfig n;
        n.feature_width = 16;
        n.num_blocks = 4;
        n.projector_pool = 4;
        return n;
    }

    static EndToEnd& get() {
        static EndToEnd e = make();
        return e;
    }

    static EndToEnd make() {
        EndToEnd e;
        e.split = data::split_timeline(data::generate_synthetic(2000, data::Mode::Mmod, 1));
        std::vector<double> p, o;
        for (const auto& s : e.split.val.samples) {
            const std::vector<double> stack(s.ensemble.begin(), s.ensemble.end());
            const auto em = baselines::ensemble_mean(stack, e.split.val.channels, e.split.val.pixels());
            p.insert(p.end(), em.begin(), em.end());
            o.insert(o.end(), s.observation.begin(), s.observation.end());
        }
        e.em = verify::evaluate(p, o);

        const auto t0 = Clock::now();
        search::SearchConfig sc;  // T=24, N=4, u=3, m=0.99 defaults
        sc.batches_per_epoch = 25;
        sc.seed = 1;
        e.arch = search::run_search(e.split.train.samples, e.net(), sc).arch;
        e.search_s = seconds_since(t0);
        return e;
    }

    train::TrainConfig train_config(double c_h) const {
        train::TrainConfig c;
        c.lr = 1e-3;
        c.beta2 = 0.99;
        c.batch_size = 32;
        c.epochs = 50;
        c.c_h = c_h;
        c.tau = 0.5;
        c.seed = 1;
        return c;
    }

    verify::Report run(double c_h, double& secs) {
        const auto t0 = Clock::now();
        auto r = train::retrain(arch, split, net(), train_config(c_h));
        secs = seconds_since(t0);
        if (r.history.empty() || !r.history.back().val_valid) fail(ErrorKind::Numeric, "no validation metrics");
        return r.history.back().val;
    }
    const verify::Report& regularized() {
        if (!reg) reg = run(10.0, reg_s);
        return *reg;
    }
    const verify::Report& unregularized() {
        if (!plain) plain = run(0.0, plain_s);
        return *plain;
    }
};

Verdict end_to_end_skill() {
    Verdict v;
    auto& e = EndToEnd::get();
    const auto& r = e.regularized();
    const double secs = e.search_s + e.reg_s;
    v.expect(r.mae <= 0.9 * e.em.mae, "MAE " + fmt("%.4f", r.mae) + " not 10% below EM " + fmt("%.4f", e.em.mae));
    v.expect(r.hss > e.em.hss, "HSS " + fmt("%.4f", r.hss) + " not above EM " + fmt("%.4f", e.em.hss));
    v.expect(secs < 1800.0, "runtime " + fmt("%.0f", secs) + " s exceeds 1800 s");
    v.summary = "arch " + e.arch.to_string() + ", MAE " + fmt("%.4f", r.mae) + " vs EM " + fmt("%.4f", e.em.mae) +
                ", HSS " + fmt("%.4f", r.hss) + " vs EM " + fmt("%.4f", e.em.hss) + ", " + fmt("%.0f", secs) + " s";
    return v;
}

Verdict regularizer_arm() {
    Verdict v;
    auto& e = EndToEnd::get();
    const double with = e.regularized().hss, without = e.unregularized().hss;
    v.expect(with >= without, "HSS c_H=10 " + fmt("%.4f", with) + " below c_H=0 " + fmt("%.4f", without));
    v.summary = "HSS c_H=10 " + fmt("%.4f", with) + " vs c_H=0 " + fmt("%.4f", without);
    return v;
}

// ---- 9: Diebold-Mariano ---------------------------------------------------

Verdict dm_consistency() {
    Verdict v;
    const double p1 = stats::normal_cdf(1.62), p2 = stats::normal_cdf(1.77);
    v.expect(std::abs(p1 - 0.947) <= 5e-4, "Phi(1.62) = " + fmt("%.6f", p1));
    v.expect(std::abs(p2 - 0.962) <= 5e-4, "Phi(1.77) = " + fmt("%.6f", p2));
    Rng rng(109);
    int checked = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 20 + uniform_index(rng, 200), h = 1 + uniform_index(rng, 3);
        std::vector<double> a(n), b(n), as(n), bs(n);
        const double lambda = uniform(rng, 0.01, 100.0);
        for (std::size_t t = 0; t < n; ++t) {
            a[t] = uniform(rng, 0.0, 5.0);
            b[t] = uniform(rng, 0.0, 5.0);
            as[t] = lambda * a[t];
            bs[t] = lambda * b[t];
        }
        const std::string at = ", trial " + std::to_string(trial);
        std::optional<double> ab, ba, scaled;
        auto stat = [&](const std::vector<double>& x, const std::vector<double>& y, std::optional<double>& out) {
            try {
                out = stats::dm_test(x, y, h).statistic;
            } catch (const Error& e) {
                if (e.kind() != ErrorKind::Numeric) throw;
            }
        };
        stat(a, b, ab);
        stat(b, a, ba);
        stat(as, bs, scaled);
        // A non-positive long-run variance is rejected for every ordering and scale alike.
        v.expect(ab.has_value() == ba.has_value() && ab.has_value() == scaled.has_value(), "inconsistent rejection" + at);
        if (!ab || !ba || !scaled) continue;
        ++checked;
        v.expect(std::abs(*ab + *ba) <= 1e-12 * std::max(1.0, std::abs(*ab)), "antisymmetry" + at);
        v.expect(std::abs(*scaled - *ab) <= 1e-9 * std::max(1.0, std::abs(*ab)), "scale invariance" + at);
    }
    v.expect(checked >= 150, "only " + std::to_string(checked) + " usable random pairs");
    v.summary = "Phi(1.62) " + fmt("%.4f", p1) + ", Phi(1.77) " + fmt("%.4f", p2) + ", " + std::to_string(checked) + "/200 random pairs";
    return v;
}

// ---- 10: determinism ------------------------------------------------------

int run_cli(const std::string& args) {
    const std::string cmd = std::string(RAINNAS_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int raw = std::system(cmd.c_str());
    return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Verdict determinism() {
    Verdict v;
    const auto root = fs::temp_directory_path() / "rainnas_acceptance_determinism";
    fs::remove_all(root);
    std::vector<fs::path> dirs{root / "a", root / "b"};
    for (const auto& d : dirs) {
        fs::create_directories(d);
        auto q = [&](const char* f) { return "'" + (d / f).string() + "'"; };
        const std::vector<std::string> steps{
            "gen --n 300 --mode mmod --seed 11 --out " + q("data.adnr"),
            "search --data " + q("data.adnr") + " --epochs 8 --blocks 2 --u 2 --width 8 --batches-per-epoch 4 --seed 11 "
                                                "--out-arch " + q("arch.json"),
            "retrain --data " + q("data.adnr") + " --arch " + q("arch.json") + " --init " + q("arch.weights.adnw") +
                " --width 8 --epochs 3 --batch 32 --lr 1e-3 --ch 10 --seed 11 --out-ckpt " + q("model.adnw"),
            "eval --data " + q("data.adnr") + " --ckpt " + q("model.adnw") + " --arch " + q("arch.json") + " --out " +
                q("eval"),
        };
        for (const auto& s : steps) {
            const int code = run_cli(s);
            v.expect(code == 0, "exit " + std::to_string(code) + " from: " + s.substr(0, s.find(' ')));
            if (code != 0) return v;
        }
    }
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(dirs[0]))
        if (e.is_regular_file() && !e.path().string().ends_with("manifest.json"))
            files.push_back(fs::relative(e.path(), dirs[0]));
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
        v.expect(fs::exists(dirs[1] / f), f.string() + " missing in second run");
        v.expect(slurp(dirs[0] / f) == slurp(dirs[1] / f), f.string() + " differs");
    }
    v.expect(files.size() >= 10, "only " + std::to_string(files.size()) + " artifacts");
    fs::remove_all(root);
    v.summary = std::to_string(files.size()) + " artifacts byte-identical (manifests excluded)";
    return v;
}

struct Criterion {
    int id;
    const char* name;
    Verdict (*run)();
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"rainnas acceptance criteria"};
    std::vector<int> only;
    app.add_option("--only", only, "criterion numbers to run")->delimiter(',');
    CLI11_PARSE(app, argc, argv);

    const std::vector<Criterion> all{
        {1, "gradient suite", gradients},
        {2, "metric oracles", metric_oracles},
        {3, "channel attention", channel_attention},
        {4, "theta schedule", schedule},
        {5, "EMA contract", ema},
        {6, "rigged search", rigged_search},
        {7, "end-to-end skill", end_to_end_skill},
        {8, "regularizer arm", regularizer_arm},
        {9, "DM consistency", dm_consistency},
        {10, "determinism", determinism},
    };
    const std::set<int> wanted(only.begin(), only.end());
    int failed = 0;
    for (const auto& c : all) {
        if (!wanted.empty() && !wanted.count(c.id)) continue;
        Verdict v;
        try {
            v = c.run();
        } catch (const std::exception& ex) {
            v.failures.push_back(std::string("exception: ") + ex.what());
        }
        std::string line = "criterion " + std::to_string(c.id) + " " + (v.passed() ? "PASS" : "FAIL") + " " + c.name;
        if (!v.summary.empty()) line += ": " + v.summary;
        std::printf("%s\n", line.c_str());
        for (std::size_t i = 0; i < std::min<std::size_t>(v.failures.size(), 5); ++i)
            std::printf("    %s\n", v.failures[i].c_str());
        if (v.failures.size() > 5) std::printf("    ... %zu more\n", v.failures.size() - 5);
        std::fflush(stdout);
        failed += !v.passed();
    }
    return failed ? 1 : 0;
}
