#ifndef RAINNAS_RAINNAS_H
#define RAINNAS_RAINNAS_H

/*
 * C interface to rainnas: synthetic ensemble-rainfall data, architecture
 * search, retraining, verification metrics, baselines and the
 * Diebold-Mariano test.
 *
 * Every fallible call returns an rn_status. On failure the calling thread's
 * last error message (rn_last_error) holds a one-line description and all
 * output handles are left untouched. Handles are opaque and owned by the
 * caller; release each with its matching *_free function (NULL is accepted).
 * Strings returned by accessors live as long as the handle they came from.
 */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define RN_API __declspec(dllexport)
#else
#define RN_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum rn_status {
    RN_OK = 0,
    RN_ERR_INTERNAL = 1,
    RN_ERR_INVALID_ARGUMENT = 2,
    RN_ERR_IO = 3, /* missing or unreadable/unwritable file */
    RN_ERR_FORMAT = 4,
    RN_ERR_NUMERIC = 5 /* undefined metric, non-finite loss, degenerate statistic */
} rn_status;

/* Message of the most recent failure on this thread; "" if none. */
RN_API const char* rn_last_error(void);
RN_API const char* rn_version(void);

/* Receives one line of text (a CSV row or a warning) without trailing newline. */
typedef void (*rn_line_fn)(const char* line, void* user);

/* ---- datasets ---------------------------------------------------------- */

typedef struct rn_dataset rn_dataset;

/* mode is "smod" (50 members) or "mmod" (4 members). */
RN_API rn_status rn_dataset_generate(size_t n, const char* mode, uint64_t seed, rn_dataset** out);
RN_API rn_status rn_dataset_load(const char* path, rn_dataset** out);
RN_API rn_status rn_dataset_save(const rn_dataset* data, const char* path);
RN_API void rn_dataset_free(rn_dataset* data);
RN_API size_t rn_dataset_size(const rn_dataset* data);
RN_API size_t rn_dataset_channels(const rn_dataset* data);
RN_API const char* rn_dataset_mode(const rn_dataset* data);
/* Sizes of the chronological 90/10 train/validation split. */
RN_API void rn_dataset_split_sizes(const rn_dataset* data, size_t* train, size_t* val);

/* Which part of a dataset an operation reads. */
typedef enum rn_split { RN_SPLIT_VAL = 0, RN_SPLIT_TRAIN = 1, RN_SPLIT_ALL = 2 } rn_split;

/* ---- network and search ------------------------------------------------ */

typedef struct rn_net_config {
    size_t feature_width;
    size_t num_blocks;
    size_t projector_pool;
} rn_net_config;

RN_API rn_net_config rn_net_config_default(void);

typedef struct rn_search_config {
    size_t epochs;
    size_t u; /* every u-th epoch (t % u == 0) updates the architecture logits */
    double momentum;
    size_t batch_size;
    double lr;
    double theta_lr;
    size_t crop;
    uint64_t seed;
    int supervised;           /* nonzero: observation MSE instead of the contrastive loss */
    size_t batches_per_epoch; /* 0: full pass */
} rn_search_config;

RN_API rn_search_config rn_search_config_default(void);

typedef struct rn_search_result rn_search_result;

/* Searches on the training split. on_log receives the CSV header and then one
 * row per epoch; on_warning receives split warnings. Either may be NULL. */
RN_API rn_status rn_search_run(const rn_dataset* data, const rn_net_config* net, const rn_search_config* cfg,
                               rn_line_fn on_log, rn_line_fn on_warning, void* user, rn_search_result** out);
RN_API const char* rn_search_result_arch_json(const rn_search_result* result);
RN_API const char* rn_search_result_log_csv(const rn_search_result* result);
RN_API rn_status rn_search_result_save_weights(const rn_search_result* result, const char* path);
RN_API void rn_search_result_free(rn_search_result* result);

/* ---- retraining and models --------------------------------------------- */

typedef struct rn_train_config {
    double lr;
    double beta1;
    double beta2;
    size_t batch_size;
    size_t epochs;
    double c_h; /* weight of the soft-HSS term; 0 gives plain MSE */
    double eps;
    double tau;
    uint64_t seed;
} rn_train_config;

RN_API rn_train_config rn_train_config_default(void);

typedef struct rn_model rn_model;

/* Reads an architecture file into a freshly allocated JSON string (free with rn_string_free). */
RN_API rn_status rn_arch_load(const char* path, char** json_out);
RN_API void rn_string_free(char* s);

/* Trains arch_json on the training split and validates every epoch. When
 * init_weights is non-NULL (a search weights file) the path's parameters start
 * from it and net->feature_width / projector_pool are taken from its shapes.
 * on_epoch receives the history CSV header, then one row per epoch. */
RN_API rn_status rn_retrain(const rn_dataset* data, const char* arch_json, const rn_net_config* net,
                            const rn_train_config* cfg, const char* init_weights, rn_line_fn on_epoch,
                            rn_line_fn on_warning, void* user, rn_model** out);
RN_API rn_status rn_model_save(const rn_model* model, const char* path);
RN_API rn_status rn_model_load(const char* path, const char* arch_json, rn_model** out);
RN_API const char* rn_model_arch_json(const rn_model* model);
RN_API void rn_model_free(rn_model* model);

/* ---- forecasts, metrics and baselines ---------------------------------- */

typedef struct rn_report {
    double bias, mae, rmse, nse, acc, hss;
} rn_report;

/* Deterministic forecasts paired with observations for part of a dataset. */
typedef struct rn_forecast rn_forecast;

RN_API rn_status rn_model_predict(rn_model* model, const rn_dataset* data, rn_split split, rn_forecast** out);
/* method is "em", "pm" or "wem"; wem weights are fitted on the training split. */
RN_API rn_status rn_baseline_predict(const rn_dataset* data, const char* method, rn_split split,
                                     rn_forecast** out);
RN_API size_t rn_forecast_size(const rn_forecast* forecast);
RN_API rn_status rn_forecast_report(const rn_forecast* forecast, rn_report* out);
/* "bias,mae,rmse,nse,acc,hss" header plus one row. */
RN_API rn_status rn_forecast_write_metrics_csv(const rn_forecast* forecast, const char* path);
/* "timestamp,loss" with the per-sample mean squared error over the grid. */
RN_API rn_status rn_forecast_write_loss_csv(const rn_forecast* forecast, const char* path);
/* Per-pixel mae, rmse, acc and hss rasters (<dir>/<name>.rnr); dir is created. */
RN_API rn_status rn_forecast_write_rasters(const rn_forecast* forecast, const char* dir);
RN_API void rn_forecast_free(rn_forecast* forecast);

/* ---- Diebold-Mariano ----------------------------------------------------- */

typedef struct rn_dm_result {
    double statistic;
    double prob; /* standard normal CDF of the statistic */
} rn_dm_result;

RN_API rn_status rn_dm_test(const double* loss_a, const double* loss_b, size_t n, size_t horizon,
                            rn_dm_result* out);
/* Reads the "loss" column of a per-sample loss CSV (free with rn_doubles_free). */
RN_API rn_status rn_loss_csv_read(const char* path, double** values, size_t* n);
RN_API void rn_doubles_free(double* values);

#ifdef __cplusplus
}
#endif

#endif
