#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "omni/backbone.hpp"
#include "omni/data.hpp"
#include "omni/frontend.hpp"
#include "omni/task_engine.hpp"

namespace omni {

struct DecodeConfig {
    std::size_t beam_width = 15;
    double temperature = 0.6;
    std::size_t max_new_tokens = 48;
    TaskKind task = TaskKind::avsr;
    CompressionRate audio_rate{4};
    CompressionRate video_rate{2};

    void validate() const;
};

struct Hypothesis {
    std::vector<TokenId> tokens;  // generated ids, eos included when reached
    double log_prob = 0;          // sum of tempered log-probabilities
    bool finished = false;        // ended on eos

    /// log_prob divided by the token count.
    double score() const;
};

/// Length-normalised beam search over the cached backbone, scoring with
/// log_softmax(logits / temperature). Ties go to the lower token id, then
/// to the shorter hypothesis.
Hypothesis beam_search(const Backbone& backbone, const OmniLora* lora, const Tensor& prefix, TaskKind task,
                       const DecodeConfig& config);
/// Argmax decoding (lowest id on ties).
Hypothesis greedy_decode(const Backbone& backbone, const OmniLora* lora, const Tensor& prefix, TaskKind task,
                         std::size_t max_new_tokens, double temperature = 1.0);

/// Decoding prefix [modality | prompt] of one utterance at the config's rates.
Tensor decode_prefix(const OmniModel& model, const SyntheticUtterance& utt, TaskKind task, RatePair rates,
                     const Tensor* audio_override = nullptr);
std::string transcribe(const OmniModel& model, const SyntheticUtterance& utt, const DecodeConfig& config,
                       const Tensor* audio_override = nullptr);

// ---------------------------------------------------------------------------
// Word error rate
// ---------------------------------------------------------------------------

struct WerBreakdown {
    std::size_t substitutions = 0;
    std::size_t deletions = 0;
    std::size_t insertions = 0;
    std::size_t reference_words = 0;

    std::size_t errors() const { return substitutions + deletions + insertions; }
    /// Throws an undefined-rate error when there are no reference words.
    double wer() const;
    WerBreakdown& operator+=(const WerBreakdown& other);
    bool operator==(const WerBreakdown&) const = default;
};

std::vector<std::string> split_words(std::string_view text);

/// Word-level Levenshtein alignment. On equal-cost paths the backtrace
/// prefers substitution (or match), then insertion, then deletion.
WerBreakdown wer(std::string_view reference, std::string_view hypothesis);
WerBreakdown word_alignment(std::span<const std::string> reference, std::span<const std::string> hypothesis);

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct EvalCell {
    TaskKind task;
    std::optional<CompressionRate> audio_rate;
    std::optional<CompressionRate> video_rate;
    double snr_db = kCleanSnr;
};

struct EvalRow {
    EvalCell cell;
    WerBreakdown counts;
    std::size_t n_utts = 0;
    bool on_menu = true;
};

/// ASR at each audio rate, VSR at each video rate, AVSR at every pair.
std::vector<EvalCell> sweep_cells(const RateMenu& menu, double snr_db = kCleanSnr);

struct EvalOptions {
    std::size_t beam_width = 15;
    double temperature = 0.6;
    std::size_t max_new_tokens = 48;
    std::size_t max_utts = 0;  // 0: whole split
    std::uint64_t noise_seed = 0;
};

/// Pooled corpus WER of one cell. Noise, when requested, touches audio
/// only; babble is drawn from `corpus` excluding the utterance itself.
EvalRow evaluate(const OmniModel& model, const Corpus& corpus, Split split, const EvalCell& cell,
                 const RateMenu& menu, const EvalOptions& options);

void write_report_header(std::ostream& out);
void write_report_row(std::ostream& out, const EvalRow& row);
std::string format_snr(double snr_db);

}  // namespace omni
