#include "omni/omni.h"

#include <cmath>
#include <cstring>
#include <exception>
#include <limits>
#include <memory>
#include <new>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "omni/config.hpp"
#include "omni/container.hpp"
#include "omni/error.hpp"
#include "omni/pipeline.hpp"

struct omni_config {
    omni::RunConfig value;
};

struct omni_eval_request {
    omni::EvalRequest value;  // cells unused until evaluation
    // explicit cells, or the SNR of a sweep expanded once the menu is known
    std::vector<std::variant<omni::EvalCell, double>> items;
    std::optional<std::size_t> beam_width;
    std::optional<double> temperature;
    std::optional<std::size_t> max_new_tokens;
};

struct omni_eval_report {
    omni::EvalResult result;
    std::string text;
};

namespace {

thread_local std::string g_last_error;

omni_status status_of(omni::ErrorKind kind) {
    using omni::ErrorKind;
    switch (kind) {
        case ErrorKind::validation:
        case ErrorKind::configuration:
        case ErrorKind::tokenization:
        case ErrorKind::undefined_rate:
            return OMNI_ERR_VALIDATION;
        case ErrorKind::io:
            return OMNI_ERR_IO;
        case ErrorKind::compatibility:
            return OMNI_ERR_COMPATIBILITY;
        default:
            return OMNI_ERR_INTERNAL;
    }
}

template <class F>
omni_status guarded(F&& body) {
    try {
        body();
        g_last_error.clear();
        return OMNI_OK;
    } catch (const omni::Error& e) {
        g_last_error = e.what();
        return status_of(e.kind());
    } catch (const std::bad_alloc&) {
        g_last_error = "out of memory";
        return OMNI_ERR_INTERNAL;
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return OMNI_ERR_INTERNAL;
    } catch (...) {
        g_last_error = "unknown error";
        return OMNI_ERR_INTERNAL;
    }
}

void require(bool ok, const char* what) {
    if (!ok) omni::fail(omni::ErrorKind::validation, what);
}

std::string path_arg(const char* p, const char* what) {
    require(p != nullptr && *p != '\0', what);
    return p;
}

omni::ProgressFn wrap(omni_progress_fn fn, void* user) {
    if (!fn) return {};
    return [fn, user](const std::string& line) { fn(line.c_str(), user); };
}

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (!out) throw std::bad_alloc();
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

omni::TaskKind task_of(omni_task t) {
    switch (t) {
        case OMNI_TASK_ASR: return omni::TaskKind::asr;
        case OMNI_TASK_VSR: return omni::TaskKind::vsr;
        case OMNI_TASK_AVSR: return omni::TaskKind::avsr;
    }
    omni::fail(omni::ErrorKind::validation, "unknown task");
}

}  // namespace

extern "C" {

const char* omni_last_error(void) { return g_last_error.c_str(); }

const char* omni_version(void) { return "0.1.0"; }

omni_status omni_config_default(omni_config** out) {
    return guarded([&] {
        require(out != nullptr, "null output handle");
        *out = new omni_config{omni::default_run_config()};
    });
}

omni_status omni_config_parse(const char* text, omni_config** out) {
    return guarded([&] {
        require(out != nullptr && text != nullptr, "null argument");
        *out = new omni_config{omni::parse_run_config(text)};
    });
}

omni_status omni_config_load(const char* path, omni_config** out) {
    return guarded([&] {
        require(out != nullptr, "null output handle");
        *out = new omni_config{omni::load_run_config(path_arg(path, "empty config path"))};
    });
}

omni_status omni_config_set_seed(omni_config* config, uint64_t seed) {
    return guarded([&] {
        require(config != nullptr, "null config");
        config->value.seed = seed;
    });
}

omni_status omni_config_get_seed(const omni_config* config, uint64_t* seed) {
    return guarded([&] {
        require(config != nullptr && seed != nullptr, "null argument");
        *seed = config->value.seed;
    });
}

omni_status omni_config_serialize(const omni_config* config, char** text) {
    return guarded([&] {
        require(config != nullptr && text != nullptr, "null argument");
        *text = dup_string(omni::serialize_run_config(config->value));
    });
}

void omni_config_free(omni_config* config) { delete config; }

void omni_string_free(char* text) { std::free(text); }

omni_status omni_gen_data(const omni_config* config, const char* out_dir, int force) {
    return guarded([&] {
        require(config != nullptr, "null config");
        omni::cmd_gen_data(config->value, path_arg(out_dir, "empty output directory"), force != 0);
    });
}

omni_status omni_pretrain(const omni_config* config, const char* data_dir, const char* out_dir, int force,
                          omni_progress_fn progress, void* user, double* initial_perplexity,
                          double* final_perplexity) {
    return guarded([&] {
        require(config != nullptr, "null config");
        const auto summary = omni::cmd_pretrain(config->value, path_arg(data_dir, "empty data directory"),
                                                path_arg(out_dir, "empty output directory"), force != 0,
                                                wrap(progress, user));
        if (initial_perplexity) *initial_perplexity = summary.initial_perplexity;
        if (final_perplexity) *final_perplexity = summary.final_perplexity;
    });
}

omni_status omni_train(const omni_config* config, const char* data_dir, const char* base_checkpoint,
                       const char* out_dir, const omni_train_options* options, omni_progress_fn progress,
                       void* user, size_t* final_step) {
    return guarded([&] {
        require(config != nullptr, "null config");
        omni::TrainOptions opts;
        if (options) {
            opts.force = options->force != 0;
            opts.resume = options->resume != 0;
            opts.stop_after = options->stop_after;
        }
        const auto summary = omni::cmd_train(config->value, path_arg(data_dir, "empty data directory"),
                                             path_arg(base_checkpoint, "empty base checkpoint path"),
                                             path_arg(out_dir, "empty output directory"), opts, wrap(progress, user));
        if (final_step) *final_step = summary.final_step;
    });
}

omni_status omni_eval_request_new(omni_eval_request** out) {
    return guarded([&] {
        require(out != nullptr, "null output handle");
        *out = new omni_eval_request{};
    });
}

void omni_eval_request_free(omni_eval_request* request) { delete request; }

omni_status omni_eval_request_add_cell(omni_eval_request* request, omni_task task, size_t audio_rate,
                                       size_t video_rate, double snr_db) {
    return guarded([&] {
        require(request != nullptr, "null request");
        omni::EvalCell cell{task_of(task), std::nullopt, std::nullopt, snr_db};
        if (audio_rate != 0) cell.audio_rate = omni::CompressionRate(audio_rate);
        if (video_rate != 0) cell.video_rate = omni::CompressionRate(video_rate);
        const bool wants_audio = cell.task != omni::TaskKind::vsr;
        const bool wants_video = cell.task != omni::TaskKind::asr;
        require(wants_audio == cell.audio_rate.has_value(), "audio rate must be given exactly for ASR and AVSR");
        require(wants_video == cell.video_rate.has_value(), "video rate must be given exactly for VSR and AVSR");
        require(!std::isnan(snr_db), "snr must be a number");
        request->items.emplace_back(cell);
    });
}

omni_status omni_eval_request_add_sweep(omni_eval_request* request, double snr_db) {
    return guarded([&] {
        require(request != nullptr, "null request");
        require(!std::isnan(snr_db), "snr must be a number");
        request->items.emplace_back(snr_db);
    });
}

omni_status omni_eval_request_set_split(omni_eval_request* request, omni_split split) {
    return guarded([&] {
        require(request != nullptr, "null request");
        require(split >= OMNI_SPLIT_TRAIN && split <= OMNI_SPLIT_TEST, "unknown split");
        request->value.split = static_cast<omni::Split>(split);
    });
}

omni_status omni_eval_request_set_decode(omni_eval_request* request, size_t beam_width, double temperature,
                                         size_t max_new_tokens) {
    return guarded([&] {
        require(request != nullptr, "null request");
        omni::DecodeConfig probe;
        if (beam_width != 0) probe.beam_width = beam_width;
        if (!std::isnan(temperature)) probe.temperature = temperature;
        if (max_new_tokens != 0) probe.max_new_tokens = max_new_tokens;
        probe.validate();
        if (beam_width != 0) request->beam_width = beam_width;
        if (!std::isnan(temperature)) request->temperature = temperature;
        if (max_new_tokens != 0) request->max_new_tokens = max_new_tokens;
    });
}

omni_status omni_eval_request_set_limit(omni_eval_request* request, size_t max_utts) {
    return guarded([&] {
        require(request != nullptr, "null request");
        request->value.options.max_utts = max_utts;
    });
}

omni_status omni_eval_request_set_noise_seed(omni_eval_request* request, uint64_t seed) {
    return guarded([&] {
        require(request != nullptr, "null request");
        request->value.options.noise_seed = seed;
    });
}

omni_status omni_eval(const char* checkpoint, const char* data_dir, const omni_eval_request* request,
                      omni_progress_fn progress, void* user, omni_eval_report** out) {
    return guarded([&] {
        require(request != nullptr && out != nullptr, "null argument");
        const std::string ckpt = path_arg(checkpoint, "empty checkpoint path");
        omni::EvalRequest full = request->value;
        if (!std::filesystem::exists(ckpt)) omni::fail(omni::ErrorKind::io, "no checkpoint at '" + ckpt + "'");
        const auto meta = omni::decode_meta(omni::read_container(ckpt).metadata);
        for (const auto& item : request->items) {
            if (const auto* cell = std::get_if<omni::EvalCell>(&item)) {
                full.cells.push_back(*cell);
            } else {
                for (auto& c : omni::sweep_cells(meta.config.rates, std::get<double>(item))) full.cells.push_back(c);
            }
        }
        full.options.beam_width = request->beam_width.value_or(meta.config.decode.beam_width);
        full.options.temperature = request->temperature.value_or(meta.config.decode.temperature);
        full.options.max_new_tokens = request->max_new_tokens.value_or(meta.config.decode.max_new_tokens);
        require(!full.cells.empty(), "no evaluation cells requested");
        auto report = std::make_unique<omni_eval_report>();
        report->result = omni::cmd_eval(ckpt, path_arg(data_dir, "empty data directory"), full, wrap(progress, user));
        report->text = omni::format_report(report->result.rows);
        *out = report.release();
    });
}

size_t omni_eval_report_rows(const omni_eval_report* report) { return report ? report->result.rows.size() : 0; }

omni_status omni_eval_report_row(const omni_eval_report* report, size_t index, omni_eval_row* row) {
    return guarded([&] {
        require(report != nullptr && row != nullptr, "null argument");
        if (index >= report->result.rows.size()) omni::fail(omni::ErrorKind::validation, "row index out of range");
        const auto& r = report->result.rows[index];
        row->task = static_cast<omni_task>(r.cell.task);
        row->audio_rate = r.cell.audio_rate ? r.cell.audio_rate->value() : 0;
        row->video_rate = r.cell.video_rate ? r.cell.video_rate->value() : 0;
        row->snr_db = r.cell.snr_db;
        row->wer = r.counts.reference_words == 0 ? std::numeric_limits<double>::quiet_NaN() : r.counts.wer();
        row->substitutions = r.counts.substitutions;
        row->deletions = r.counts.deletions;
        row->insertions = r.counts.insertions;
        row->reference_words = r.counts.reference_words;
        row->utterances = r.n_utts;
        row->on_menu = r.on_menu ? 1 : 0;
    });
}

const char* omni_eval_report_text(const omni_eval_report* report) { return report ? report->text.c_str() : ""; }

omni_status omni_eval_report_hashes(const omni_eval_report* report, uint64_t* before, uint64_t* after) {
    return guarded([&] {
        require(report != nullptr, "null report");
        if (before) *before = report->result.checkpoint_hash_before;
        if (after) *after = report->result.checkpoint_hash_after;
    });
}

void omni_eval_report_free(omni_eval_report* report) { delete report; }

omni_status omni_cost(uint64_t tasks, uint64_t audio_rates, uint64_t video_rates,
                      omni_cost_row rows[OMNI_COST_METHODS], char** table) {
    return guarded([&] {
        require(rows != nullptr, "null rows");
        const auto reports = omni::cmd_cost(tasks, audio_rates, video_rates);
        for (std::size_t i = 0; i < reports.size() && i < OMNI_COST_METHODS; ++i) {
            rows[i].method = omni::method_name(reports[i].method).data();
            rows[i].trained_models = reports[i].trained_models;
            rows[i].passes_per_batch = reports[i].llm_passes_per_batch;
        }
        if (table) *table = dup_string(omni::format_cost_table(reports));
    });
}

}  // extern "C"
