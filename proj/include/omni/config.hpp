#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "omni/backbone.hpp"
#include "omni/data.hpp"
#include "omni/frontend.hpp"
#include "omni/task_engine.hpp"

namespace omni {

struct TrainConfig {
    AdamWConfig optim{1e-3, 1e-5, 0.9, 0.999, 1e-8, 0.1, 12000};
    std::size_t batch_size = 8;
    std::size_t validate_every = 0;  // 0: only at the end
    std::size_t valid_utts = 50;
    std::size_t checkpoint_every = 0;  // 0: only at the end

    bool operator==(const TrainConfig&) const = default;
};

struct PretrainConfig {
    AdamWConfig optim{3e-3, 1e-4, 0.9, 0.999, 1e-8, 0.0, 10000};
    std::size_t batch_size = 16;
    std::size_t eval_every = 250;
    double copy_fraction = 0.8;   // share of repeated-text continuation examples
    std::size_t max_repeat = 5;   // per-character repeat bound in those examples
    double substitute_prob = 0.3;  // chance a source letter there is replaced by a random letter
    double constant_repeat_prob = 0.5;  // chance one repeat count serves a whole source stream

    bool operator==(const PretrainConfig&) const = default;
};

struct DecodeSettings {
    std::size_t beam_width = 15;
    double temperature = 0.6;
    std::size_t max_new_tokens = 48;

    bool operator==(const DecodeSettings&) const = default;
};

struct EvalSettings {
    std::vector<double> snrs{5.0, 0.0, -5.0};
    std::size_t max_utts = 0;

    bool operator==(const EvalSettings&) const = default;
};

/// Every setting of a run. The text form is sectioned key = value lines;
/// unknown sections or keys are rejected.
struct RunConfig {
    CorpusConfig corpus;
    BackboneConfig backbone;
    LoraConfig lora;
    FrontendConfig frontend;
    RateMenu rates = default_rate_menu();
    LossWeights loss;
    TrainConfig train;
    PretrainConfig pretrain;
    AugmentConfig augment{0.5, -5.0, 10.0};
    DecodeSettings decode;
    EvalSettings eval;
    std::uint64_t seed = 1;

    void validate() const;
    ModelConfig model_config() const;
    /// The corpus settings with the corpus seed derived from `seed`.
    CorpusConfig corpus_config() const;
    bool operator==(const RunConfig&) const = default;
};

RunConfig default_run_config();
RunConfig parse_run_config(std::string_view text);
std::string serialize_run_config(const RunConfig& config);
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace omni
