#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "omni/config.hpp"
#include "omni/container.hpp"
#include "omni/decode.hpp"
#include "omni/task_engine.hpp"

namespace omni {

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

inline constexpr std::string_view kBaseCheckpointFile = "base.omni";
inline constexpr std::string_view kOmniCheckpointFile = "omni.omni";
inline constexpr std::string_view kMetricsFile = "metrics.jsonl";

/// Metadata block: "key=value" lines, then a "config:" line followed by the
/// serialised RunConfig.
struct CheckpointMeta {
    std::string kind;  // "base" or "omni"
    std::size_t step = 0;
    std::uint64_t base_hash = 0;
    std::map<std::string, std::string> extra;
    RunConfig config;
};

std::string encode_meta(const CheckpointMeta& meta);
CheckpointMeta decode_meta(const std::string& text);

void save_base_checkpoint(const std::filesystem::path& path, const Backbone& backbone, const CheckpointMeta& meta);

struct TrainState {
    std::size_t step = 0;
    Rng rate_rng;
};

/// Model weights, and optionally optimiser moments and loop state.
void save_omni_checkpoint(const std::filesystem::path& path, const OmniModel& model, const RunConfig& config,
                          const AdamW* optimizer, const TrainState& state);

/// Copies values of every tensor named in `params` from the container;
/// missing names or shape mismatches are compatibility errors.
void restore_tensors(const Container& container, std::span<const NamedTensor> params);

struct LoadedModel {
    std::unique_ptr<OmniModel> model;
    CheckpointMeta meta;
    Container container;
};

LoadedModel load_omni_checkpoint(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

/// Exclusive advisory lock on a directory, released on destruction.
class DirectoryLock {
public:
    explicit DirectoryLock(const std::filesystem::path& dir);
    ~DirectoryLock();
    DirectoryLock(const DirectoryLock&) = delete;
    DirectoryLock& operator=(const DirectoryLock&) = delete;

private:
    int fd_ = -1;
};

Corpus cmd_gen_data(const RunConfig& config, const std::filesystem::path& out_dir, bool force);

struct PretrainSummary {
    double initial_perplexity = 0;
    double final_perplexity = 0;
    std::uint64_t base_hash = 0;
};

using ProgressFn = std::function<void(const std::string& line)>;

/// Text-only next-token training of the base; writes base.omni and a
/// metrics stream into out_dir.
PretrainSummary cmd_pretrain(const RunConfig& config, const std::filesystem::path& data_dir,
                             const std::filesystem::path& out_dir, bool force, const ProgressFn& progress = {});

struct TrainOptions {
    bool force = false;
    bool resume = false;
    std::size_t stop_after = 0;  // stop (and checkpoint) once this step count is reached; 0: run to the end
};

struct TrainSummary {
    std::size_t first_step = 0;
    std::size_t final_step = 0;
    std::vector<StepMetrics> steps;
    std::uint64_t base_hash = 0;
};

TrainSummary cmd_train(const RunConfig& config, const std::filesystem::path& data_dir,
                       const std::filesystem::path& base_path, const std::filesystem::path& out_dir,
                       const TrainOptions& options, const ProgressFn& progress = {});

struct EvalRequest {
    std::vector<EvalCell> cells;
    Split split = Split::test;
    EvalOptions options;
};

struct EvalResult {
    std::vector<EvalRow> rows;
    std::uint64_t checkpoint_hash_before = 0;
    std::uint64_t checkpoint_hash_after = 0;
};

EvalResult cmd_eval(const std::filesystem::path& checkpoint, const std::filesystem::path& data_dir,
                    const EvalRequest& request, const ProgressFn& progress = {});
std::string format_report(const std::vector<EvalRow>& rows);

std::vector<CostReport> cmd_cost(std::uint64_t tasks, std::uint64_t audio_rates, std::uint64_t video_rates);
std::string format_cost_table(const std::vector<CostReport>& rows);

std::string hex64(std::uint64_t value);

}  // namespace omni
