// Command-line front end. Talks to the library only through the C API.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "rainnas/rainnas.h"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr const char* kExitCodes =
    "Exit codes:\n"
    "  0  success\n"
    "  1  internal error\n"
    "  2  usage error (unknown flag, bad value, invalid configuration)\n"
    "  3  missing or unwritable file\n"
    "  4  file format error\n"
    "  5  numeric error (undefined metric, non-finite loss, degenerate statistic)\n"
    "Failures print one line to stderr: error: <kind>: <message>";

const char* kind_name(rn_status s) {
    switch (s) {
        case RN_OK: return "ok";
        case RN_ERR_INVALID_ARGUMENT: return "usage";
        case RN_ERR_IO: return "io";
        case RN_ERR_FORMAT: return "format";
        case RN_ERR_NUMERIC: return "numeric";
        case RN_ERR_INTERNAL: break;
    }
    return "internal";
}

// Carries a library failure up to main, which turns it into the exit code.
struct Failure {
    rn_status status;
    std::string message;
};

void check(rn_status s) {
    if (s != RN_OK) throw Failure{s, rn_last_error()};
}

template <typename T, void (*Free)(T*)>
struct Handle {
    T* p = nullptr;
    Handle() = default;
    Handle(const Handle&) = delete;
    Handle& operator=(const Handle&) = delete;
    ~Handle() { Free(p); }
    T** out() { return &p; }
    T* get() const { return p; }
};

using Dataset = Handle<rn_dataset, rn_dataset_free>;
using SearchResult = Handle<rn_search_result, rn_search_result_free>;
using Model = Handle<rn_model, rn_model_free>;
using Forecast = Handle<rn_forecast, rn_forecast_free>;

void print_warning(const char* line, void*) { std::cerr << "warning: " << line << "\n"; }

// Writes a CSV row stream to a file while echoing progress to stderr.
struct CsvSink {
    std::ofstream file;
    bool echo = true;
    static void line(const char* text, void* user) {
        auto* self = static_cast<CsvSink*>(user);
        self->file << text << "\n";
        if (self->echo) std::cerr << text << "\n";
    }
};

std::ofstream open_text(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Failure{RN_ERR_IO, "cannot write " + path.string()};
    return out;
}

fs::path sibling(const fs::path& base, const std::string& suffix) {
    auto p = base;
    p.replace_extension();
    return fs::path(p.string() + suffix);
}

rn_split parse_split(const std::string& s) {
    if (s == "val") return RN_SPLIT_VAL;
    if (s == "train") return RN_SPLIT_TRAIN;
    if (s == "all") return RN_SPLIT_ALL;
    throw Failure{RN_ERR_INVALID_ARGUMENT, "unknown split '" + s + "' (expected val, train or all)"};
}

// One manifest per run: what ran, with which settings, on which files.
struct Manifest {
    json doc;
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

    explicit Manifest(const std::string& command) {
        doc["command"] = command;
        doc["version"] = rn_version();
    }
    void write(const fs::path& path) {
        doc["wall_time_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        auto out = open_text(path);
        out << doc.dump(2) << "\n";
    }
};

json report_json(const rn_report& r) {
    return {{"bias", r.bias}, {"mae", r.mae}, {"rmse", r.rmse}, {"nse", r.nse}, {"acc", r.acc}, {"hss", r.hss}};
}

// ---- subcommands ----------------------------------------------------------

struct GenArgs {
    std::size_t n = 0;
    std::string mode = "mmod";
    std::uint64_t seed = 0;
    std::string out;
};

void run_gen(const GenArgs& a) {
    Manifest m("gen");
    Dataset d;
    check(rn_dataset_generate(a.n, a.mode.c_str(), a.seed, d.out()));
    check(rn_dataset_save(d.get(), a.out.c_str()));
    m.doc["seed"] = a.seed;
    m.doc["config"] = {{"n", a.n}, {"mode", a.mode}};
    m.doc["inputs"] = json::object();
    m.doc["outputs"] = {{"dataset", a.out}};
    m.write(a.out + ".manifest.json");
    std::cout << "wrote " << a.n << " samples to " << a.out << "\n";
}

struct NetArgs {
    std::size_t width = rn_net_config_default().feature_width;
    std::size_t pool = rn_net_config_default().projector_pool;
};

struct SearchArgs {
    std::string data;
    std::string out_arch;
    std::string out_log;
    std::string out_weights;
    std::size_t blocks = rn_net_config_default().num_blocks;
    NetArgs net;
    rn_search_config cfg = rn_search_config_default();
    bool supervised = false;
};

void run_search(SearchArgs a) {
    Manifest m("search");
    if (a.out_log.empty()) a.out_log = sibling(a.out_arch, ".log.csv").string();
    if (a.out_weights.empty()) a.out_weights = sibling(a.out_arch, ".weights.adnw").string();
    a.cfg.supervised = a.supervised ? 1 : 0;
    Dataset d;
    check(rn_dataset_load(a.data.c_str(), d.out()));
    rn_net_config net{a.net.width, a.blocks, a.net.pool};
    CsvSink log{open_text(a.out_log)};
    SearchResult r;
    check(rn_search_run(d.get(), &net, &a.cfg, &CsvSink::line, &print_warning, &log, r.out()));
    auto arch = open_text(a.out_arch);
    arch << rn_search_result_arch_json(r.get()) << "\n";
    arch.close();
    check(rn_search_result_save_weights(r.get(), a.out_weights.c_str()));

    m.doc["seed"] = a.cfg.seed;
    m.doc["config"] = {{"epochs", a.cfg.epochs},   {"blocks", a.blocks},
                       {"u", a.cfg.u},             {"momentum", a.cfg.momentum},
                       {"lr", a.cfg.lr},           {"theta_lr", a.cfg.theta_lr},
                       {"batch", a.cfg.batch_size}, {"crop", a.cfg.crop},
                       {"width", a.net.width},     {"pool", a.net.pool},
                       {"supervised", a.supervised}, {"batches_per_epoch", a.cfg.batches_per_epoch}};
    m.doc["inputs"] = {{"data", a.data}};
    m.doc["outputs"] = {{"arch", a.out_arch}, {"log", a.out_log}, {"weights", a.out_weights}};
    m.write(a.out_arch + ".manifest.json");
    std::cout << rn_search_result_arch_json(r.get()) << "\n";
}

struct RetrainArgs {
    std::string data;
    std::string arch;
    std::string init;
    std::string out_ckpt;
    std::string out_history;
    NetArgs net;
    rn_train_config cfg = rn_train_config_default();
};

void run_retrain(RetrainArgs a) {
    Manifest m("retrain");
    if (a.out_history.empty()) a.out_history = sibling(a.out_ckpt, ".history.csv").string();
    Dataset d;
    check(rn_dataset_load(a.data.c_str(), d.out()));
    char* arch_json = nullptr;
    check(rn_arch_load(a.arch.c_str(), &arch_json));
    const std::string arch(arch_json);
    rn_string_free(arch_json);
    rn_net_config net = rn_net_config_default();
    net.feature_width = a.net.width;
    net.projector_pool = a.net.pool;
    CsvSink history{open_text(a.out_history)};
    Model model;
    check(rn_retrain(d.get(), arch.c_str(), &net, &a.cfg, a.init.empty() ? nullptr : a.init.c_str(), &CsvSink::line,
                     &print_warning, &history, model.out()));
    check(rn_model_save(model.get(), a.out_ckpt.c_str()));

    m.doc["seed"] = a.cfg.seed;
    m.doc["config"] = {{"epochs", a.cfg.epochs}, {"lr", a.cfg.lr},       {"beta1", a.cfg.beta1},
                       {"beta2", a.cfg.beta2},   {"batch", a.cfg.batch_size}, {"ch", a.cfg.c_h},
                       {"eps", a.cfg.eps},       {"tau", a.cfg.tau},     {"width", a.net.width},
                       {"pool", a.net.pool},     {"architecture", json::parse(arch)}};
    m.doc["inputs"] = {{"data", a.data}, {"arch", a.arch}};
    if (!a.init.empty()) m.doc["inputs"]["init"] = a.init;
    m.doc["outputs"] = {{"checkpoint", a.out_ckpt}, {"history", a.out_history}};
    m.write(a.out_ckpt + ".manifest.json");
    std::cout << "wrote " << a.out_ckpt << "\n";
}

// Shared tail of eval and baseline: metrics, per-sample losses, manifest.
void write_forecast(const rn_forecast* f, const fs::path& out, Manifest& m, bool rasters) {
    fs::create_directories(out);
    rn_report r{};
    check(rn_forecast_report(f, &r));
    check(rn_forecast_write_metrics_csv(f, (out / "metrics.csv").string().c_str()));
    check(rn_forecast_write_loss_csv(f, (out / "loss.csv").string().c_str()));
    m.doc["outputs"] = {{"metrics", (out / "metrics.csv").string()}, {"loss", (out / "loss.csv").string()}};
    if (rasters) {
        check(rn_forecast_write_rasters(f, (out / "rasters").string().c_str()));
        m.doc["outputs"]["rasters"] = (out / "rasters").string();
    }
    m.doc["metrics"] = report_json(r);
    m.write(out / "manifest.json");
    std::cout << "bias=" << r.bias << " mae=" << r.mae << " rmse=" << r.rmse << " nse=" << r.nse << " acc=" << r.acc
              << " hss=" << r.hss << "\n";
}

struct EvalArgs {
    std::string data;
    std::string ckpt;
    std::string arch;
    std::string out;
    std::string split = "val";
};

void run_eval(const EvalArgs& a) {
    Manifest m("eval");
    const rn_split split = parse_split(a.split);
    Dataset d;
    check(rn_dataset_load(a.data.c_str(), d.out()));
    char* arch_json = nullptr;
    check(rn_arch_load(a.arch.c_str(), &arch_json));
    const std::string arch(arch_json);
    rn_string_free(arch_json);
    Model model;
    check(rn_model_load(a.ckpt.c_str(), arch.c_str(), model.out()));
    Forecast f;
    check(rn_model_predict(model.get(), d.get(), split, f.out()));
    m.doc["seed"] = nullptr;
    m.doc["config"] = {{"split", a.split}, {"samples", rn_forecast_size(f.get())}};
    m.doc["inputs"] = {{"data", a.data}, {"checkpoint", a.ckpt}, {"arch", a.arch}};
    write_forecast(f.get(), a.out, m, true);
}

struct BaselineArgs {
    std::string data;
    std::string method = "em";
    std::string out;
    std::string split = "val";
};

void run_baseline(const BaselineArgs& a) {
    Manifest m("baseline");
    const rn_split split = parse_split(a.split);
    Dataset d;
    check(rn_dataset_load(a.data.c_str(), d.out()));
    Forecast f;
    check(rn_baseline_predict(d.get(), a.method.c_str(), split, f.out()));
    m.doc["seed"] = nullptr;
    m.doc["config"] = {{"method", a.method}, {"split", a.split}, {"samples", rn_forecast_size(f.get())}};
    m.doc["inputs"] = {{"data", a.data}};
    write_forecast(f.get(), a.out, m, false);
}

struct DmArgs {
    std::string loss_a;
    std::string loss_b;
    std::size_t horizon = 1;
    std::string out;
};

std::vector<double> read_losses(const std::string& path) {
    double* values = nullptr;
    std::size_t n = 0;
    check(rn_loss_csv_read(path.c_str(), &values, &n));
    std::vector<double> v(values, values + n);
    rn_doubles_free(values);
    return v;
}

void run_dm(const DmArgs& a) {
    Manifest m("dm");
    const auto la = read_losses(a.loss_a);
    const auto lb = read_losses(a.loss_b);
    if (la.size() != lb.size())
        throw Failure{RN_ERR_INVALID_ARGUMENT, "loss series differ in length (" + std::to_string(la.size()) + " vs " +
                                                   std::to_string(lb.size()) + ")"};
    rn_dm_result r{};
    check(rn_dm_test(la.data(), lb.data(), la.size(), a.horizon, &r));
    char line[96];
    std::snprintf(line, sizeof line, "DM=%.6f prob=%.6f", r.statistic, r.prob);
    std::cout << line << "\n";
    if (!a.out.empty()) {
        const fs::path out(a.out);
        auto csv = open_text(out / "dm.csv");
        char row[96];
        std::snprintf(row, sizeof row, "%.17g,%.17g", r.statistic, r.prob);
        csv << "statistic,prob\n" << row << "\n";
        csv.close();
        m.doc["seed"] = nullptr;
        m.doc["config"] = {{"horizon", a.horizon}, {"samples", la.size()}};
        m.doc["inputs"] = {{"lossA", a.loss_a}, {"lossB", a.loss_b}};
        m.doc["outputs"] = {{"dm", (out / "dm.csv").string()}};
        m.doc["result"] = {{"statistic", r.statistic}, {"prob", r.prob}};
        m.write(out / "manifest.json");
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"rainnas: architecture search for ensemble rainfall post-processing"};
    app.footer(kExitCodes);
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(rn_version()));

    GenArgs gen;
    auto* g = app.add_subcommand("gen", "Generate a synthetic ensemble-rainfall dataset");
    g->add_option("--n", gen.n, "Number of samples")->required();
    g->add_option("--mode", gen.mode, "smod (50 members) or mmod (4 members)")->capture_default_str();
    g->add_option("--seed", gen.seed, "Random seed")->capture_default_str();
    g->add_option("--out", gen.out, "Output dataset file")->required();

    SearchArgs search;
    auto* s = app.add_subcommand("search", "Search an architecture on the training split");
    s->add_option("--data", search.data, "Dataset file")->required();
    s->add_option("--epochs", search.cfg.epochs, "Search epochs T")->capture_default_str();
    s->add_option("--blocks", search.blocks, "Building blocks N")->capture_default_str();
    s->add_option("--u", search.cfg.u, "Every u-th epoch updates the architecture logits")->capture_default_str();
    s->add_option("--momentum", search.cfg.momentum, "Target network EMA momentum")->capture_default_str();
    s->add_option("--lr", search.cfg.lr, "Weight learning rate")->capture_default_str();
    s->add_option("--theta-lr", search.cfg.theta_lr, "Architecture logit learning rate")->capture_default_str();
    s->add_option("--batch", search.cfg.batch_size, "Batch size")->capture_default_str();
    s->add_option("--crop", search.cfg.crop, "Random crop size")->capture_default_str();
    s->add_option("--batches-per-epoch", search.cfg.batches_per_epoch, "Batch cap per epoch (0: full pass)")
        ->capture_default_str();
    s->add_flag("--supervised", search.supervised, "Observation MSE instead of the contrastive loss");
    s->add_option("--width", search.net.width, "Feature width F")->capture_default_str();
    s->add_option("--pool", search.net.pool, "Projector pooling size")->capture_default_str();
    s->add_option("--seed", search.cfg.seed, "Random seed")->capture_default_str();
    s->add_option("--out-arch", search.out_arch, "Architecture JSON output")->required();
    s->add_option("--out-log", search.out_log, "Search log CSV (default: <out-arch>.log.csv)");
    s->add_option("--out-weights", search.out_weights, "Online weights (default: <out-arch>.weights.adnw)");

    RetrainArgs retrain;
    auto* r = app.add_subcommand("retrain", "Train an architecture on the training split");
    r->add_option("--data", retrain.data, "Dataset file")->required();
    r->add_option("--arch", retrain.arch, "Architecture JSON")->required();
    r->add_option("--init", retrain.init, "Start from searched weights");
    r->add_option("--epochs", retrain.cfg.epochs, "Epochs")->capture_default_str();
    r->add_option("--lr", retrain.cfg.lr, "Learning rate")->capture_default_str();
    r->add_option("--beta1", retrain.cfg.beta1, "Adam beta1")->capture_default_str();
    r->add_option("--beta2", retrain.cfg.beta2, "Adam beta2")->capture_default_str();
    r->add_option("--batch", retrain.cfg.batch_size, "Batch size")->capture_default_str();
    r->add_option("--ch", retrain.cfg.c_h, "Weight of the soft-HSS term")->capture_default_str();
    r->add_option("--tau", retrain.cfg.tau, "Soft level temperature (mm)")->capture_default_str();
    r->add_option("--eps", retrain.cfg.eps, "Lower clamp of the soft HSS")->capture_default_str();
    r->add_option("--width", retrain.net.width, "Feature width F (ignored with --init)")->capture_default_str();
    r->add_option("--pool", retrain.net.pool, "Projector pooling size (ignored with --init)")->capture_default_str();
    r->add_option("--seed", retrain.cfg.seed, "Random seed")->capture_default_str();
    r->add_option("--out-ckpt", retrain.out_ckpt, "Checkpoint output")->required();
    r->add_option("--out-history", retrain.out_history, "Per-epoch metric CSV (default: <out-ckpt>.history.csv)");

    EvalArgs eval;
    auto* e = app.add_subcommand("eval", "Evaluate a checkpoint");
    e->add_option("--data", eval.data, "Dataset file")->required();
    e->add_option("--ckpt", eval.ckpt, "Checkpoint")->required();
    e->add_option("--arch", eval.arch, "Architecture JSON")->required();
    e->add_option("--split", eval.split, "val, train or all")->capture_default_str();
    e->add_option("--out", eval.out, "Output directory")->required();

    BaselineArgs base;
    auto* b = app.add_subcommand("baseline", "Evaluate a statistical baseline");
    b->add_option("--data", base.data, "Dataset file")->required();
    b->add_option("--method", base.method, "em, pm or wem")->capture_default_str();
    b->add_option("--split", base.split, "val, train or all")->capture_default_str();
    b->add_option("--out", base.out, "Output directory")->required();

    DmArgs dm;
    auto* d = app.add_subcommand("dm", "Diebold-Mariano test on two per-sample loss files");
    d->add_option("--lossA", dm.loss_a, "Loss CSV of forecaster A")->required();
    d->add_option("--lossB", dm.loss_b, "Loss CSV of forecaster B")->required();
    d->add_option("--horizon", dm.horizon, "Forecast horizon h")->capture_default_str();
    d->add_option("--out", dm.out, "Optional output directory for dm.csv and a manifest");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        const int code = app.exit(err);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*g) run_gen(gen);
        if (*s) run_search(search);
        if (*r) run_retrain(retrain);
        if (*e) run_eval(eval);
        if (*b) run_baseline(base);
        if (*d) run_dm(dm);
    } catch (const Failure& f) {
        std::cerr << "error: " << kind_name(f.status) << ": " << f.message << "\n";
        return static_cast<int>(f.status);
    } catch (const std::exception& ex) {
        std::cerr << "error: internal: " << ex.what() << "\n";
        return 1;
    }
    return 0;
}
