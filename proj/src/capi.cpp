#include "rainnas/rainnas.h"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <new>
#include <sstream>

#include "baselines.hpp"
#include "dataset.hpp"
#include "dm.hpp"
#include "error.hpp"
#include "metrics.hpp"
#include "retrain.hpp"
#include "search.hpp"

#ifndef RAINNAS_VERSION
#define RAINNAS_VERSION "0.0.0-unknown"
#endif

using namespace rainnas;

struct rn_dataset {
    data::Dataset data;
    data::Split split;  // cached chronological split
};

struct rn_search_result {
    std::string arch_json;
    std::string log_csv;
    grad::ParamStore online;
};

struct rn_model {
    train::Model model;
    std::string arch_json;
};

struct rn_forecast {
    std::vector<std::string> timestamps;
    std::vector<std::vector<double>> pred, obs;
    std::size_t w = 0, h = 0;
};

namespace {

thread_local std::string g_last_error;

rn_status status_for(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::InvalidArgument: return RN_ERR_INVALID_ARGUMENT;
        case ErrorKind::Io: return RN_ERR_IO;
        case ErrorKind::Format: return RN_ERR_FORMAT;
        case ErrorKind::Numeric: return RN_ERR_NUMERIC;
        case ErrorKind::Internal: return RN_ERR_INTERNAL;
    }
    return RN_ERR_INTERNAL;
}

// Runs `body`, translating exceptions into a status plus the thread's last error.
template <typename F>
rn_status guarded(F&& body) {
    try {
        body();
        g_last_error.clear();
        return RN_OK;
    } catch (const Error& e) {
        g_last_error = e.what();
        return status_for(e.kind());
    } catch (const std::bad_alloc&) {
        g_last_error = "out of memory";
        return RN_ERR_INTERNAL;
    } catch (const std::exception& e) {
        g_last_error = std::string("internal error: ") + e.what();
        return RN_ERR_INTERNAL;
    } catch (...) {
        g_last_error = "internal error: unknown exception";
        return RN_ERR_INTERNAL;
    }
}

void require_ptr(const void* p, const char* what) {
    if (!p) fail(ErrorKind::InvalidArgument, std::string(what) + " must not be NULL");
}

void emit(rn_line_fn fn, void* user, const std::string& line) {
    if (fn) fn(line.c_str(), user);
}

std::span<const data::GridSample> samples_of(const rn_dataset* d, rn_split split) {
    switch (split) {
        case RN_SPLIT_VAL:
            if (d->split.val.samples.empty())
                fail(ErrorKind::InvalidArgument, "dataset has no validation samples (need at least 10)");
            return d->split.val.samples;
        case RN_SPLIT_TRAIN: return d->split.train.samples;
        case RN_SPLIT_ALL: return d->data.samples;
    }
    fail(ErrorKind::InvalidArgument, "unknown split selector");
}

rn_dataset* wrap(data::Dataset d) {
    auto* out = new rn_dataset{std::move(d), {}};
    out->split = data::split_timeline(out->data);
    return out;
}

nas::NetworkConfig net_for(const rn_dataset* d, const rn_net_config* net) {
    nas::NetworkConfig cfg;
    cfg.in_channels = d->data.channels;
    cfg.grid_h = d->data.h;
    cfg.grid_w = d->data.w;
    if (net) {
        cfg.feature_width = net->feature_width;
        cfg.num_blocks = net->num_blocks;
        cfg.projector_pool = net->projector_pool;
    }
    cfg.validate();
    return cfg;
}

rn_forecast* forecast_from(std::span<const data::GridSample> samples, std::vector<std::vector<double>> pred) {
    auto* f = new rn_forecast;
    f->w = data::kGridW;
    f->h = data::kGridH;
    f->pred = std::move(pred);
    for (const auto& s : samples) {
        f->timestamps.push_back(s.timestamp);
        f->obs.emplace_back(s.observation.begin(), s.observation.end());
    }
    return f;
}

void pooled(const rn_forecast* f, std::vector<double>& p, std::vector<double>& o) {
    for (std::size_t s = 0; s < f->pred.size(); ++s) {
        p.insert(p.end(), f->pred[s].begin(), f->pred[s].end());
        o.insert(o.end(), f->obs[s].begin(), f->obs[s].end());
    }
}

std::ofstream open_out(const char* path) {
    require_ptr(path, "path");
    const std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) fail(ErrorKind::Io, "cannot write " + p.string());
    return out;
}

}  // namespace

extern "C" {

const char* rn_last_error(void) { return g_last_error.c_str(); }
const char* rn_version(void) { return RAINNAS_VERSION; }

rn_status rn_dataset_generate(size_t n, const char* mode, uint64_t seed, rn_dataset** out) {
    return guarded([&] {
        require_ptr(mode, "mode");
        require_ptr(out, "out");
        *out = wrap(data::generate_synthetic(n, data::parse_mode(mode), seed));
    });
}

rn_status rn_dataset_load(const char* path, rn_dataset** out) {
    return guarded([&] {
        require_ptr(path, "path");
        require_ptr(out, "out");
        *out = wrap(data::read_dataset(path));
    });
}

rn_status rn_dataset_save(const rn_dataset* d, const char* path) {
    return guarded([&] {
        require_ptr(d, "dataset");
        require_ptr(path, "path");
        const std::filesystem::path p(path);
        if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
        data::write_dataset(d->data, p);
    });
}

void rn_dataset_free(rn_dataset* d) { delete d; }
size_t rn_dataset_size(const rn_dataset* d) { return d ? d->data.size() : 0; }
size_t rn_dataset_channels(const rn_dataset* d) { return d ? d->data.channels : 0; }
const char* rn_dataset_mode(const rn_dataset* d) { return d ? data::mode_name(d->data.mode) : ""; }

void rn_dataset_split_sizes(const rn_dataset* d, size_t* train, size_t* val) {
    if (train) *train = d ? d->split.train.size() : 0;
    if (val) *val = d ? d->split.val.size() : 0;
}

rn_net_config rn_net_config_default(void) {
    const nas::NetworkConfig c;
    return {c.feature_width, c.num_blocks, c.projector_pool};
}

rn_search_config rn_search_config_default(void) {
    const search::SearchConfig c;
    return {c.epochs, c.u, c.momentum, c.batch_size, c.lr, c.theta_lr, c.crop, c.seed, c.supervised ? 1 : 0,
            c.batches_per_epoch};
}

rn_status rn_search_run(const rn_dataset* d, const rn_net_config* net, const rn_search_config* cfg, rn_line_fn on_log,
                        rn_line_fn on_warning, void* user, rn_search_result** out) {
    return guarded([&] {
        require_ptr(d, "dataset");
        require_ptr(cfg, "search config");
        require_ptr(out, "out");
        const auto net_cfg = net_for(d, net);
        search::SearchConfig sc;
        sc.epochs = cfg->epochs;
        sc.blocks = net_cfg.num_blocks;
        sc.u = cfg->u;
        sc.momentum = cfg->momentum;
        sc.batch_size = cfg->batch_size;
        sc.lr = cfg->lr;
        sc.theta_lr = cfg->theta_lr;
        sc.crop = cfg->crop;
        sc.seed = cfg->seed;
        sc.supervised = cfg->supervised != 0;
        sc.batches_per_epoch = cfg->batches_per_epoch;
        for (const auto& w : d->split.warnings) emit(on_warning, user, w);

        std::string log = std::string(search::kSearchLogHeader) + "\n";
        emit(on_log, user, search::kSearchLogHeader);
        auto r = search::run_search(d->split.train.samples, net_cfg, sc, {}, [&](const search::EpochLog& e) {
            const auto row = search::log_csv_row(e);
            log += row + "\n";
            emit(on_log, user, row);
        });
        *out = new rn_search_result{nas::arch_to_json(r.arch), std::move(log), std::move(r.online)};
    });
}

const char* rn_search_result_arch_json(const rn_search_result* r) { return r ? r->arch_json.c_str() : ""; }
const char* rn_search_result_log_csv(const rn_search_result* r) { return r ? r->log_csv.c_str() : ""; }

rn_status rn_search_result_save_weights(const rn_search_result* r, const char* path) {
    return guarded([&] {
        require_ptr(r, "search result");
        require_ptr(path, "path");
        const std::filesystem::path p(path);
        if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
        grad::save_checkpoint(r->online, p);
    });
}

void rn_search_result_free(rn_search_result* r) { delete r; }

rn_train_config rn_train_config_default(void) {
    const train::TrainConfig c;
    return {c.lr, c.beta1, c.beta2, c.batch_size, c.epochs, c.c_h, c.eps, c.tau, c.seed};
}

rn_status rn_arch_load(const char* path, char** json_out) {
    return guarded([&] {
        require_ptr(path, "path");
        require_ptr(json_out, "json_out");
        const auto json = nas::arch_to_json(nas::load_arch(path));
        auto* s = new char[json.size() + 1];
        std::memcpy(s, json.c_str(), json.size() + 1);
        *json_out = s;
    });
}

void rn_string_free(char* s) { delete[] s; }

rn_status rn_retrain(const rn_dataset* d, const char* arch_json, const rn_net_config* net, const rn_train_config* cfg,
                     const char* init_weights, rn_line_fn on_epoch, rn_line_fn on_warning, void* user,
                     rn_model** out) {
    return guarded([&] {
        require_ptr(d, "dataset");
        require_ptr(arch_json, "arch_json");
        require_ptr(cfg, "train config");
        require_ptr(out, "out");
        const auto arch = nas::arch_from_json(arch_json);
        train::TrainConfig tc;
        tc.lr = cfg->lr;
        tc.beta1 = cfg->beta1;
        tc.beta2 = cfg->beta2;
        tc.batch_size = cfg->batch_size;
        tc.epochs = cfg->epochs;
        tc.c_h = cfg->c_h;
        tc.eps = cfg->eps;
        tc.tau = cfg->tau;
        tc.seed = cfg->seed;

        rn_net_config shape = net ? *net : rn_net_config_default();
        shape.num_blocks = arch.ops.size();
        std::optional<grad::ParamStore> init;
        if (init_weights) {
            init = grad::load_checkpoint(init_weights);
            const auto inferred = train::infer_config(*init, arch.ops.size());
            if (inferred.in_channels != d->data.channels)
                fail(ErrorKind::InvalidArgument, "initial weights expect " + std::to_string(inferred.in_channels) +
                                                     " channels, dataset has " + std::to_string(d->data.channels));
            shape.feature_width = inferred.feature_width;
            shape.projector_pool = inferred.projector_pool;
        }
        const auto net_cfg = net_for(d, &shape);

        emit(on_epoch, user, train::kHistoryHeader);
        auto r = train::retrain(arch, d->split, net_cfg, tc, init ? &*init : nullptr,
                                [&](const train::EpochRecord& rec) { emit(on_epoch, user, train::history_csv_row(rec)); });
        for (const auto& w : r.warnings) emit(on_warning, user, w);
        *out = new rn_model{std::move(r.model), nas::arch_to_json(arch)};
    });
}

rn_status rn_model_save(const rn_model* m, const char* path) {
    return guarded([&] {
        require_ptr(m, "model");
        require_ptr(path, "path");
        const std::filesystem::path p(path);
        if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
        m->model.save(p);
    });
}

rn_status rn_model_load(const char* path, const char* arch_json, rn_model** out) {
    return guarded([&] {
        require_ptr(path, "path");
        require_ptr(arch_json, "arch_json");
        require_ptr(out, "out");
        const auto arch = nas::arch_from_json(arch_json);
        *out = new rn_model{train::Model::load(path, arch), nas::arch_to_json(arch)};
    });
}

const char* rn_model_arch_json(const rn_model* m) { return m ? m->arch_json.c_str() : ""; }
void rn_model_free(rn_model* m) { delete m; }

rn_status rn_model_predict(rn_model* m, const rn_dataset* d, rn_split split, rn_forecast** out) {
    return guarded([&] {
        require_ptr(m, "model");
        require_ptr(d, "dataset");
        require_ptr(out, "out");
        if (m->model.net.config().in_channels != d->data.channels)
            fail(ErrorKind::InvalidArgument, "model expects " + std::to_string(m->model.net.config().in_channels) +
                                                 " channels, dataset has " + std::to_string(d->data.channels));
        const auto samples = samples_of(d, split);
        *out = forecast_from(samples, m->model.predict(samples));
    });
}

rn_status rn_baseline_predict(const rn_dataset* d, const char* method, rn_split split, rn_forecast** out) {
    return guarded([&] {
        require_ptr(d, "dataset");
        require_ptr(method, "method");
        require_ptr(out, "out");
        const auto kind = baselines::parse_kind(method);
        const auto samples = samples_of(d, split);
        const std::size_t c = d->data.channels, hw = d->data.pixels();
        std::vector<double> weights;
        if (kind == baselines::BaselineKind::WEM) weights = baselines::fit_wem_weights(d->split.train.samples, c);
        std::vector<std::vector<double>> pred;
        for (const auto& s : samples) {
            const std::vector<double> stack(s.ensemble.begin(), s.ensemble.end());
            switch (kind) {
                case baselines::BaselineKind::EM: pred.push_back(baselines::ensemble_mean(stack, c, hw)); break;
                case baselines::BaselineKind::PM: pred.push_back(baselines::prob_match(stack, c, hw)); break;
                case baselines::BaselineKind::WEM:
                    pred.push_back(baselines::weighted_em(stack, c, hw, weights));
                    break;
            }
        }
        *out = forecast_from(samples, std::move(pred));
    });
}

size_t rn_forecast_size(const rn_forecast* f) { return f ? f->pred.size() : 0; }

rn_status rn_forecast_report(const rn_forecast* f, rn_report* out) {
    return guarded([&] {
        require_ptr(f, "forecast");
        require_ptr(out, "out");
        std::vector<double> p, o;
        pooled(f, p, o);
        const auto r = verify::evaluate(p, o);
        *out = {r.bias, r.mae, r.rmse, r.nse, r.acc, r.hss};
    });
}

rn_status rn_forecast_write_metrics_csv(const rn_forecast* f, const char* path) {
    return guarded([&] {
        require_ptr(f, "forecast");
        std::vector<double> p, o;
        pooled(f, p, o);
        const auto r = verify::evaluate(p, o);
        auto out = open_out(path);
        out << verify::kReportHeader << "\n" << verify::report_csv_row(r) << "\n";
        if (!out) fail(ErrorKind::Io, std::string("write failed: ") + path);
    });
}

rn_status rn_forecast_write_loss_csv(const rn_forecast* f, const char* path) {
    return guarded([&] {
        require_ptr(f, "forecast");
        auto out = open_out(path);
        out << "timestamp,loss\n";
        char buf[64];
        for (std::size_t s = 0; s < f->pred.size(); ++s) {
            double sq = 0;
            for (std::size_t k = 0; k < f->pred[s].size(); ++k) {
                const double e = f->pred[s][k] - f->obs[s][k];
                sq += e * e;
            }
            std::snprintf(buf, sizeof buf, "%.17g", sq / static_cast<double>(f->pred[s].size()));
            out << f->timestamps[s] << "," << buf << "\n";
        }
        if (!out) fail(ErrorKind::Io, std::string("write failed: ") + path);
    });
}

rn_status rn_forecast_write_rasters(const rn_forecast* f, const char* dir) {
    return guarded([&] {
        require_ptr(f, "forecast");
        require_ptr(dir, "dir");
        const std::filesystem::path root(dir);
        std::filesystem::create_directories(root);
        const auto maps = verify::pixel_maps(f->pred, f->obs, f->w, f->h);
        verify::write_raster(root / "mae.rnr", "mae", maps.mae, maps.w, maps.h);
        verify::write_raster(root / "rmse.rnr", "rmse", maps.rmse, maps.w, maps.h);
        verify::write_raster(root / "acc.rnr", "acc", maps.acc, maps.w, maps.h);
        verify::write_raster(root / "hss.rnr", "hss", maps.hss, maps.w, maps.h);
    });
}

void rn_forecast_free(rn_forecast* f) { delete f; }

rn_status rn_dm_test(const double* a, const double* b, size_t n, size_t horizon, rn_dm_result* out) {
    return guarded([&] {
        require_ptr(out, "out");
        if (n > 0) {
            require_ptr(a, "loss_a");
            require_ptr(b, "loss_b");
        }
        const auto r = stats::dm_test(std::span<const double>(a, n), std::span<const double>(b, n), horizon);
        *out = {r.statistic, r.prob};
    });
}

rn_status rn_loss_csv_read(const char* path, double** values, size_t* n) {
    return guarded([&] {
        require_ptr(path, "path");
        require_ptr(values, "values");
        require_ptr(n, "n");
        std::ifstream in(path);
        if (!in) fail(ErrorKind::Io, std::string("cannot open ") + path);
        std::string line;
        if (!std::getline(in, line)) fail(ErrorKind::Format, std::string(path) + ": empty file");
        std::vector<std::string> header;
        {
            std::stringstream ss(line);
            std::string cell;
            while (std::getline(ss, cell, ',')) header.push_back(cell);
        }
        const auto it = std::find(header.begin(), header.end(), "loss");
        if (it == header.end()) fail(ErrorKind::Format, std::string(path) + ": no 'loss' column in header");
        const std::size_t col = static_cast<std::size_t>(it - header.begin());
        std::vector<double> v;
        std::size_t lineno = 1;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            std::stringstream ss(line);
            std::string cell;
            for (std::size_t k = 0; k <= col; ++k)
                if (!std::getline(ss, cell, ','))
                    fail(ErrorKind::Format, std::string(path) + ":" + std::to_string(lineno) + ": missing loss column");
            char* end = nullptr;
            const double x = std::strtod(cell.c_str(), &end);
            if (end == cell.c_str() || *end != '\0')
                fail(ErrorKind::Format,
                     std::string(path) + ":" + std::to_string(lineno) + ": not a number: '" + cell + "'");
            v.push_back(x);
        }
        auto* buf = new double[v.empty() ? 1 : v.size()];
        std::copy(v.begin(), v.end(), buf);
        *values = buf;
        *n = v.size();
    });
}

void rn_doubles_free(double* values) { delete[] values; }

}  // extern "C"
