#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "omni/backbone.hpp"
#include "omni/data.hpp"
#include "omni/frontend.hpp"
#include "omni/random.hpp"
#include "omni/tensor.hpp"

namespace omni {

// ---------------------------------------------------------------------------
// Model bundle
// ---------------------------------------------------------------------------

struct FrontendConfig {
    std::size_t d_raw = 16;
    std::size_t d_enc = 32;
    std::size_t d_proj = 64;

    bool operator==(const FrontendConfig&) const = default;
};

struct ModelConfig {
    BackboneConfig backbone;
    LoraConfig lora;
    FrontendConfig frontend;
};

/// Backbone + adapters + one encoder and one projector per modality.
class OmniModel {
public:
    /// Base and adapters draw from sub-streams of `init_seed`.
    OmniModel(const ModelConfig& config, std::uint64_t init_seed);

    const ModelConfig& config() const { return config_; }

    Backbone backbone;
    OmniLora lora;
    ModalityEncoder audio_encoder, video_encoder;
    Projector audio_projector, video_projector;

    /// Adapters and frontends (everything the Omni stage trains).
    std::vector<NamedTensor> trainable_parameters() const;
    std::vector<NamedTensor> frontend_parameters() const;
    /// Base, adapters, frontends.
    std::vector<NamedTensor> all_parameters() const;

    /// raw -> encode -> compress -> project.
    Tensor project_audio(const Tensor& audio_raw, CompressionRate rate) const;
    Tensor project_video(const Tensor& video_raw, CompressionRate rate) const;

private:
    ModelConfig config_;
};

// ---------------------------------------------------------------------------
// Sequence assembly
// ---------------------------------------------------------------------------

enum class SegmentKind : std::uint8_t { audio, video, prompt, target };
std::string_view segment_name(SegmentKind kind);

struct SegmentSpan {
    SegmentKind kind;
    std::size_t begin;
    std::size_t end;

    std::size_t length() const { return end - begin; }
};

/// [modality segment(s) | prompt ids | target ids]. Modality segments are
/// projected embeddings; the token parts are ids embedded by the backbone.
struct TaskSequence {
    TaskKind task = TaskKind::asr;
    std::uint32_t utterance_id = 0;
    std::optional<CompressionRate> audio_rate;
    std::optional<CompressionRate> video_rate;
    Tensor audio;  // [L_a' x d_model] or undefined
    Tensor video;  // [L_v' x d_model] or undefined
    std::vector<TokenId> prompt;
    TargetText target;  // empty for a decoding prefix
    std::vector<SegmentSpan> segment_map;
    std::vector<std::uint8_t> loss_mask;  // true exactly on target positions

    std::size_t length() const { return loss_mask.size(); }
    std::size_t prefix_length() const;
};

/// "Transcribe speech to text." / "... video ..." / "... speech and video ...".
std::vector<TokenId> task_prompt_ids(TaskKind task);

/// Builds one sequence. ASR ignores `video`, VSR ignores `audio`; AVSR
/// needs both (audio first). An undefined required segment is an assembly error.
TaskSequence assemble(TaskKind task, const Tensor& audio, const Tensor& video, std::span<const TokenId> prompt,
                      const TargetText& target);

/// Row-concatenated backbone input. With `with_target` false the target
/// part is omitted (the decoding prefix).
Tensor embed_sequence(const Backbone& backbone, const TaskSequence& seq, bool with_target = true);

/// Targets and mask shifted by one so that logits row p scores token p+1.
struct ShiftedTargets {
    std::vector<TokenId> targets;
    std::vector<std::uint8_t> mask;
};
ShiftedTargets shift_targets(const TaskSequence& seq);

/// -log p(Y | Z_t), summed over target tokens. One backbone pass.
Tensor sequence_loss(const Backbone& backbone, const OmniLora* lora, const TaskSequence& seq);

// ---------------------------------------------------------------------------
// Joint loss
// ---------------------------------------------------------------------------

struct LossWeights {
    double asr = 1.0;
    double vsr = 1.5;
    double avsr = 1.0;

    double operator[](TaskKind task) const;
    void validate() const;
    bool operator==(const LossWeights&) const = default;
};

/// The three sequences of one utterance at one shared (a_i, v_j).
struct TaskTriple {
    TaskSequence asr, vsr, avsr;

    const TaskSequence& operator[](TaskKind task) const;
};

struct OmniLoss {
    Tensor total;
    std::array<double, kTaskCount> per_task{};  // unweighted, batch means
};

/// Checks that the triple shares one utterance and one rate pair.
void check_triple(const TaskTriple& triple);

/// lambda-weighted sum of the three task losses: three backbone passes.
OmniLoss omni_loss(const Backbone& backbone, const OmniLora* lora, const TaskTriple& triple,
                   const LossWeights& weights);
/// Batched form: one pass per task over the whole batch, losses averaged
/// over utterances.
OmniLoss omni_batch_loss(const Backbone& backbone, const OmniLora* lora, std::span<const TaskTriple> batch,
                         const LossWeights& weights);

// ---------------------------------------------------------------------------
// Rate sampling
// ---------------------------------------------------------------------------

struct RatePair {
    CompressionRate audio;
    CompressionRate video;

    bool operator==(const RatePair&) const = default;
};

/// Independent uniform draws; audio first.
RatePair sample_rates(Rng& rng, const RateMenu& menu);

/// Encodes and compresses each modality once and shares the result between
/// the sequences that use it.
TaskTriple build_triple(const OmniModel& model, const SyntheticUtterance& utt, RatePair rates,
                        const Tensor* noisy_audio = nullptr);

// ---------------------------------------------------------------------------
// Training cost accounting
// ---------------------------------------------------------------------------

enum class Method : std::uint8_t { llama_avsr, llama_mtsk, llama_mt, omni };
inline constexpr std::array<Method, 4> kAllMethods{Method::llama_avsr, Method::llama_mtsk, Method::llama_mt,
                                                   Method::omni};
std::string_view method_name(Method method);

struct CostReport {
    Method method;
    std::uint64_t trained_models;
    std::uint64_t llm_passes_per_batch;

    bool operator==(const CostReport&) const = default;
};

CostReport count_cost(Method method, std::uint64_t tasks, std::uint64_t audio_rates, std::uint64_t video_rates);

// ---------------------------------------------------------------------------
// Optimiser
// ---------------------------------------------------------------------------

struct AdamWConfig {
    double lr_max = 1e-3;
    double lr_min = 1e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.1;
    std::size_t total_steps = 1000;

    void validate() const;
    bool operator==(const AdamWConfig&) const = default;
};

/// lr_min + (lr_max - lr_min) (1 + cos(pi t / T)) / 2, clamped at t = T.
double cosine_lr(const AdamWConfig& config, std::size_t step);

/// Decoupled weight decay, bias-corrected moments. Parameters without a
/// gradient are skipped entirely.
class AdamW {
public:
    AdamW(std::vector<NamedTensor> params, const AdamWConfig& config);

    void step(double lr);
    void zero_grad();

    std::size_t step_count() const { return t_; }
    const AdamWConfig& config() const { return config_; }
    const std::vector<NamedTensor>& parameters() const { return params_; }

    /// Moment tensors named "optim.m.<param>" / "optim.v.<param>".
    std::vector<NamedTensor> export_state() const;
    void import_state(std::span<const NamedTensor> state, std::size_t step_count);

private:
    std::vector<NamedTensor> params_;
    AdamWConfig config_;
    std::vector<std::vector<double>> m_, v_;
    std::size_t t_ = 0;
};

// ---------------------------------------------------------------------------
// Training step
// ---------------------------------------------------------------------------

/// Training-time babble augmentation of the audio stream.
struct AugmentConfig {
    double noise_prob = 0.0;
    double snr_min = -5.0;
    double snr_max = 10.0;

    void validate() const;
    bool operator==(const AugmentConfig&) const = default;
};

struct StepMetrics {
    std::size_t step = 0;
    std::array<double, kTaskCount> task_loss{};
    double total_loss = 0;
    std::size_t audio_rate = 0;
    std::size_t video_rate = 0;
    double lr = 0;
    std::uint64_t passes = 0;

    std::string to_json() const;
};

struct TrainStepInputs {
    std::span<const SyntheticUtterance* const> batch;
    const RateMenu* menu = nullptr;
    LossWeights weights;
    AugmentConfig augment;
    const Corpus* noise_pool = nullptr;  // required when augment.noise_prob > 0
    std::uint64_t noise_seed = 0;        // per-step noise stream
};

/// One rate pair, one compression per modality, the joint loss, one
/// backward and one optimiser step.
StepMetrics train_step(OmniModel& model, const TrainStepInputs& in, AdamW& optimizer, Rng& rate_rng,
                       std::size_t step);

}  // namespace omni
