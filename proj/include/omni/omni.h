/* C interface to the omni library. All functions return an omni_status;
 * on failure omni_last_error() describes the most recent error on the
 * calling thread. Handles are opaque and owned by the caller. */
#ifndef OMNI_OMNI_H
#define OMNI_OMNI_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum omni_status {
    OMNI_OK = 0,
    OMNI_ERR_INTERNAL = 1,
    OMNI_ERR_VALIDATION = 2,
    OMNI_ERR_IO = 3,
    OMNI_ERR_COMPATIBILITY = 4
} omni_status;

typedef enum omni_task { OMNI_TASK_ASR = 0, OMNI_TASK_VSR = 1, OMNI_TASK_AVSR = 2 } omni_task;

typedef enum omni_split { OMNI_SPLIT_TRAIN = 0, OMNI_SPLIT_VALID = 1, OMNI_SPLIT_TEST = 2 } omni_split;

typedef struct omni_config omni_config;
typedef struct omni_eval_request omni_eval_request;
typedef struct omni_eval_report omni_eval_report;

/* Called once per metrics or report line. */
typedef void (*omni_progress_fn)(const char* line, void* user);

const char* omni_last_error(void);
const char* omni_version(void);

/* ---- configuration ---- */
omni_status omni_config_default(omni_config** out);
omni_status omni_config_parse(const char* text, omni_config** out);
omni_status omni_config_load(const char* path, omni_config** out);
omni_status omni_config_set_seed(omni_config* config, uint64_t seed);
omni_status omni_config_get_seed(const omni_config* config, uint64_t* seed);
/* Serialised text; release with omni_string_free. */
omni_status omni_config_serialize(const omni_config* config, char** text);
void omni_config_free(omni_config* config);
void omni_string_free(char* text);

/* ---- commands ---- */
omni_status omni_gen_data(const omni_config* config, const char* out_dir, int force);

omni_status omni_pretrain(const omni_config* config, const char* data_dir, const char* out_dir, int force,
                          omni_progress_fn progress, void* user, double* initial_perplexity,
                          double* final_perplexity);

typedef struct omni_train_options {
    int force;
    int resume;
    size_t stop_after; /* 0: run to the configured step count */
} omni_train_options;

omni_status omni_train(const omni_config* config, const char* data_dir, const char* base_checkpoint,
                       const char* out_dir, const omni_train_options* options, omni_progress_fn progress,
                       void* user, size_t* final_step);

/* ---- evaluation ---- */
omni_status omni_eval_request_new(omni_eval_request** out);
void omni_eval_request_free(omni_eval_request* request);
/* Rates of 0 mean "not used"; snr_db may be +INFINITY for clean audio. */
omni_status omni_eval_request_add_cell(omni_eval_request* request, omni_task task, size_t audio_rate,
                                       size_t video_rate, double snr_db);
/* Adds the 8 cells of the training menu stored in the checkpoint. */
omni_status omni_eval_request_add_sweep(omni_eval_request* request, double snr_db);
omni_status omni_eval_request_set_split(omni_eval_request* request, omni_split split);
/* 0 (NaN for temperature) keeps the checkpoint's own decode setting. */
omni_status omni_eval_request_set_decode(omni_eval_request* request, size_t beam_width, double temperature,
                                         size_t max_new_tokens);
omni_status omni_eval_request_set_limit(omni_eval_request* request, size_t max_utts);
omni_status omni_eval_request_set_noise_seed(omni_eval_request* request, uint64_t seed);

typedef struct omni_eval_row {
    omni_task task;
    size_t audio_rate; /* 0 when unused */
    size_t video_rate;
    double snr_db;
    double wer; /* NaN when the reference is empty */
    size_t substitutions;
    size_t deletions;
    size_t insertions;
    size_t reference_words;
    size_t utterances;
    int on_menu;
} omni_eval_row;

omni_status omni_eval(const char* checkpoint, const char* data_dir, const omni_eval_request* request,
                      omni_progress_fn progress, void* user, omni_eval_report** out);
size_t omni_eval_report_rows(const omni_eval_report* report);
omni_status omni_eval_report_row(const omni_eval_report* report, size_t index, omni_eval_row* row);
/* TSV text owned by the report. */
const char* omni_eval_report_text(const omni_eval_report* report);
/* Checkpoint file hashes taken before and after evaluation. */
omni_status omni_eval_report_hashes(const omni_eval_report* report, uint64_t* before, uint64_t* after);
void omni_eval_report_free(omni_eval_report* report);

/* ---- cost ---- */
typedef struct omni_cost_row {
    const char* method; /* static string */
    uint64_t trained_models;
    uint64_t passes_per_batch;
} omni_cost_row;

#define OMNI_COST_METHODS 4

/* Fills rows[0..3]; passing table != NULL also returns the TSV table
 * (release with omni_string_free). */
omni_status omni_cost(uint64_t tasks, uint64_t audio_rates, uint64_t video_rates,
                      omni_cost_row rows[OMNI_COST_METHODS], char** table);

#ifdef __cplusplus
}
#endif

#endif
