// Command-line front end; talks to the library only through omni.h.
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "omni/omni.h"

namespace {

struct Globals {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out;
    bool force = false;
    bool quiet = false;
};

int report(omni_status status) {
    if (status != OMNI_OK) std::cerr << "omni: " << omni_last_error() << '\n';
    return static_cast<int>(status);
}

void to_stderr(const char* line, void* user) {
    if (!*static_cast<bool*>(user)) std::cerr << line << '\n';
}

// Owns a config handle built from --config and --seed.
struct ConfigHandle {
    omni_config* ptr = nullptr;
    ~ConfigHandle() { omni_config_free(ptr); }
};

omni_status load_config(const Globals& g, ConfigHandle& out) {
    omni_status s = g.config_path.empty() ? omni_config_default(&out.ptr) : omni_config_load(g.config_path.c_str(), &out.ptr);
    if (s == OMNI_OK && g.seed) s = omni_config_set_seed(out.ptr, *g.seed);
    return s;
}

int require_out(const Globals& g) {
    if (g.out.empty()) {
        std::cerr << "omni: --out is required for this command\n";
        return OMNI_ERR_VALIDATION;
    }
    return 0;
}

std::optional<omni_task> parse_task(const std::string& s) {
    if (s == "ASR" || s == "asr") return OMNI_TASK_ASR;
    if (s == "VSR" || s == "vsr") return OMNI_TASK_VSR;
    if (s == "AVSR" || s == "avsr") return OMNI_TASK_AVSR;
    return std::nullopt;
}

std::optional<omni_split> parse_split(const std::string& s) {
    if (s == "train") return OMNI_SPLIT_TRAIN;
    if (s == "valid") return OMNI_SPLIT_VALID;
    if (s == "test") return OMNI_SPLIT_TEST;
    return std::nullopt;
}

std::optional<double> parse_snr(const std::string& s) {
    if (s == "inf" || s == "clean") return std::numeric_limits<double>::infinity();
    try {
        std::size_t used = 0;
        double v = std::stod(s, &used);
        if (used != s.size() || std::isnan(v)) return std::nullopt;
        return v;
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"omni: multi-task, multi-rate speech recognition on a small decoder"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--config", g.config_path, "run configuration file");
    app.add_option("--seed", g.seed, "override the run seed");
    app.add_option("--out", g.out, "output directory (report file for eval)");
    app.add_flag("--force", g.force, "overwrite existing outputs");
    app.add_flag("-q,--quiet", g.quiet, "no progress lines on stderr");

    auto* gen = app.add_subcommand("gen-data", "generate the synthetic corpus");

    auto* pre = app.add_subcommand("pretrain", "text-only pretraining of the base");
    std::string pre_data;
    pre->add_option("--data", pre_data, "corpus directory")->required();

    auto* train = app.add_subcommand("train", "adapter and front-end training");
    std::string train_data, train_base;
    bool resume = false;
    std::size_t stop_after = 0;
    train->add_option("--data", train_data, "corpus directory")->required();
    train->add_option("--base", train_base, "base checkpoint")->required();
    train->add_flag("--resume", resume, "continue from the checkpoint in --out");
    train->add_option("--stop-after", stop_after, "stop and checkpoint after this many steps");

    auto* eval = app.add_subcommand("eval", "decode a split and report WER");
    std::string eval_ckpt, eval_data, task_s, split_s = "test";
    std::size_t audio_rate = 0, video_rate = 0, limit = 0;
    std::vector<std::string> snr_s{"inf"};
    bool sweep = false;
    std::optional<std::size_t> beam, max_new;
    std::optional<double> temperature;
    std::uint64_t noise_seed = 0;
    eval->add_option("--checkpoint", eval_ckpt, "trained checkpoint")->required();
    eval->add_option("--data", eval_data, "corpus directory")->required();
    eval->add_option("--task", task_s, "ASR, VSR or AVSR");
    eval->add_option("--audio-rate", audio_rate, "audio compression rate");
    eval->add_option("--video-rate", video_rate, "video compression rate");
    eval->add_option("--snr", snr_s, "audio SNR in dB, or inf; repeatable")->expected(1, -1);
    eval->add_flag("--sweep", sweep, "all task/rate cells of the training menu");
    eval->add_option("--split", split_s, "train, valid or test");
    eval->add_option("--beam", beam, "beam width");
    eval->add_option("--temperature", temperature, "softmax temperature");
    eval->add_option("--max-new-tokens", max_new, "decode length bound");
    eval->add_option("--limit", limit, "evaluate at most this many utterances");
    eval->add_option("--noise-seed", noise_seed, "seed of the babble draws");

    auto* cost = app.add_subcommand("cost", "models and passes per batch by method");
    std::uint64_t tasks = 3, n_audio = 2, n_video = 2;
    cost->add_option("--tasks", tasks, "number of tasks");
    cost->add_option("--audio-rates", n_audio, "number of audio rates");
    cost->add_option("--video-rates", n_video, "number of video rates");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : OMNI_ERR_VALIDATION;
    }

    if (gen->parsed()) {
        if (int rc = require_out(g)) return rc;
        ConfigHandle cfg;
        if (omni_status s = load_config(g, cfg); s != OMNI_OK) return report(s);
        return report(omni_gen_data(cfg.ptr, g.out.c_str(), g.force));
    }

    if (pre->parsed()) {
        if (int rc = require_out(g)) return rc;
        ConfigHandle cfg;
        if (omni_status s = load_config(g, cfg); s != OMNI_OK) return report(s);
        double p0 = 0, p1 = 0;
        omni_status s = omni_pretrain(cfg.ptr, pre_data.c_str(), g.out.c_str(), g.force, to_stderr, &g.quiet, &p0, &p1);
        if (s == OMNI_OK) std::cout << "perplexity " << p0 << " -> " << p1 << '\n';
        return report(s);
    }

    if (train->parsed()) {
        if (int rc = require_out(g)) return rc;
        ConfigHandle cfg;
        if (omni_status s = load_config(g, cfg); s != OMNI_OK) return report(s);
        omni_train_options opts{g.force, resume, stop_after};
        std::size_t final_step = 0;
        omni_status s = omni_train(cfg.ptr, train_data.c_str(), train_base.c_str(), g.out.c_str(), &opts, to_stderr,
                                   &g.quiet, &final_step);
        if (s == OMNI_OK) std::cout << "trained to step " << final_step << '\n';
        return report(s);
    }

    if (eval->parsed()) {
        omni_eval_request* req = nullptr;
        if (omni_status s = omni_eval_request_new(&req); s != OMNI_OK) return report(s);
        struct Guard {
            omni_eval_request* r;
            ~Guard() { omni_eval_request_free(r); }
        } guard{req};

        auto split = parse_split(split_s);
        if (!split) {
            std::cerr << "omni: unknown split '" << split_s << "'\n";
            return OMNI_ERR_VALIDATION;
        }
        omni_status s = omni_eval_request_set_split(req, *split);
        std::vector<double> snrs;
        for (const auto& text : snr_s) {
            auto v = parse_snr(text);
            if (!v) {
                std::cerr << "omni: bad snr '" << text << "'\n";
                return OMNI_ERR_VALIDATION;
            }
            snrs.push_back(*v);
        }
        if (sweep == !task_s.empty()) {
            std::cerr << "omni: give exactly one of --sweep or --task\n";
            return OMNI_ERR_VALIDATION;
        }
        for (double snr : snrs) {
            if (s != OMNI_OK) break;
            if (sweep) {
                s = omni_eval_request_add_sweep(req, snr);
            } else {
                auto task = parse_task(task_s);
                if (!task) {
                    std::cerr << "omni: unknown task '" << task_s << "'\n";
                    return OMNI_ERR_VALIDATION;
                }
                s = omni_eval_request_add_cell(req, *task, audio_rate, video_rate, snr);
            }
        }
        if (s == OMNI_OK && (beam || temperature || max_new)) {
            s = omni_eval_request_set_decode(req, beam.value_or(0), temperature.value_or(std::nan("")), max_new.value_or(0));
        }
        if (s == OMNI_OK) s = omni_eval_request_set_limit(req, limit);
        if (s == OMNI_OK) s = omni_eval_request_set_noise_seed(req, noise_seed);
        if (s != OMNI_OK) return report(s);

        if (!g.out.empty() && !g.force && std::ifstream(g.out)) {
            std::cerr << "omni: '" << g.out << "' exists; pass --force to overwrite\n";
            return OMNI_ERR_IO;
        }
        omni_eval_report* rep = nullptr;
        s = omni_eval(eval_ckpt.c_str(), eval_data.c_str(), req, nullptr, nullptr, &rep);
        if (s != OMNI_OK) return report(s);
        const std::string text = omni_eval_report_text(rep);
        omni_eval_report_free(rep);
        if (g.out.empty()) {
            std::cout << text;
        } else {
            std::ofstream f(g.out, std::ios::binary | std::ios::trunc);
            f << text;
            if (!f) {
                std::cerr << "omni: cannot write '" << g.out << "'\n";
                return OMNI_ERR_IO;
            }
        }
        return 0;
    }

    if (cost->parsed()) {
        omni_cost_row rows[OMNI_COST_METHODS];
        char* table = nullptr;
        omni_status s = omni_cost(tasks, n_audio, n_video, rows, &table);
        if (s == OMNI_OK) std::cout << table;
        omni_string_free(table);
        return report(s);
    }
    return 0;
}
