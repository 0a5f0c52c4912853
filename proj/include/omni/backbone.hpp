#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "omni/ops.hpp"
#include "omni/random.hpp"
#include "omni/tensor.hpp"

namespace omni {

enum class TaskKind : std::uint8_t { asr = 0, vsr = 1, avsr = 2 };

inline constexpr std::array<TaskKind, 3> kAllTasks{TaskKind::asr, TaskKind::vsr, TaskKind::avsr};
inline constexpr std::size_t kTaskCount = kAllTasks.size();

std::string_view task_name(TaskKind task);  // "ASR", "VSR", "AVSR"
std::optional<TaskKind> parse_task(std::string_view name);
constexpr std::size_t task_index(TaskKind task) { return static_cast<std::size_t>(task); }

struct BackboneConfig {
    std::size_t d_model = 64;
    std::size_t n_layers = 2;
    std::size_t n_heads = 4;
    std::size_t d_ff = 128;
    std::size_t vocab_size = 36;
    std::size_t max_len = 320;

    void validate() const;
    bool operator==(const BackboneConfig&) const = default;
};

// ---------------------------------------------------------------------------
// Omni-LoRA
// ---------------------------------------------------------------------------

/// S: one shared adapter; T: one adapter per task; ST: both, summed.
enum class LoraVariant : std::uint8_t { shared, task, shared_task };

std::string_view variant_tag(LoraVariant variant);  // "S", "T", "ST"
std::optional<LoraVariant> parse_variant(std::string_view tag);

struct LoraConfig {
    LoraVariant variant = LoraVariant::shared_task;
    std::size_t rank = 8;
    double alpha = 1.0;

    bool operator==(const LoraConfig&) const = default;
};

/// Low-rank update alpha * (Z W_down) W_up with W_down [d x r], W_up [r x d].
struct LoraAdapter {
    Tensor down;
    Tensor up;
    std::size_t rank = 0;
    double alpha = 1.0;
};

enum class Projection : std::uint8_t { query = 0, value = 1 };

/// Adapters sit on the query and value projections of every layer.
struct AdapterSite {
    std::size_t layer = 0;
    Projection projection = Projection::query;

    std::size_t index() const { return 2 * layer + static_cast<std::size_t>(projection); }
};

/// Instrumentation buckets: shared, then one per task.
enum class AdapterGroup : std::uint8_t { shared = 0, asr = 1, vsr = 2, avsr = 3 };
AdapterGroup group_of(TaskKind task);
std::string_view group_name(AdapterGroup group);  // "shared", "asr", "vsr", "avsr"

class OmniLora {
public:
    /// w_down ~ U(-1/sqrt(d), 1/sqrt(d)), w_up = 0.
    OmniLora(const LoraConfig& config, const BackboneConfig& backbone, Rng& rng);

    OmniLora(const OmniLora& other);
    OmniLora& operator=(const OmniLora&) = delete;

    const LoraConfig& config() const { return config_; }
    LoraVariant variant() const { return config_.variant; }
    std::size_t site_count() const { return sites_; }

    bool has_shared() const { return !shared_.empty(); }
    bool has_task_adapters() const { return !per_task_[0].empty(); }
    const LoraAdapter* shared_adapter(AdapterSite site) const;
    const LoraAdapter* task_adapter(TaskKind task, AdapterSite site) const;
    /// Mutable access; throws a configuration error when the variant lacks it.
    LoraAdapter& shared_at(AdapterSite site);
    LoraAdapter& task_at(TaskKind task, AdapterSite site);

    /// Names follow "lora.<group>.layer<l>.<q|v>.<down|up>".
    std::vector<NamedTensor> parameters() const;

    void note_read(AdapterGroup group) const;
    std::uint64_t reads(AdapterGroup group) const;
    void reset_reads() const;

private:
    LoraConfig config_;
    std::size_t sites_ = 0;
    std::vector<LoraAdapter> shared_;
    std::array<std::vector<LoraAdapter>, kTaskCount> per_task_;
    mutable std::array<std::atomic<std::uint64_t>, 4> reads_{};
};

/// Z W plus the variant's low-rank terms for (task, site). W is expected
/// to be frozen; a null `lora` yields the plain projection.
Tensor lora_project(const Tensor& z, AdapterSite site, TaskKind task, const OmniLora* lora, const Tensor& weight);

/// Adapter parameters only: S = n_layers*2*(2*d*r), T = 3x, ST = 4x.
std::size_t trainable_parameter_count(LoraVariant variant, const BackboneConfig& config, std::size_t rank);

// ---------------------------------------------------------------------------
// Decoder-only transformer
// ---------------------------------------------------------------------------

struct LayerWeights {
    Tensor ln1_gain, ln1_bias;
    Tensor wq, wk, wv, wo;
    Tensor ln2_gain, ln2_bias;
    Tensor ff1_weight, ff1_bias, ff2_weight, ff2_bias;
};

/// Per-layer key/value rows of a decoded prefix, for incremental decoding.
struct KvCache {
    std::vector<std::vector<double>> keys;
    std::vector<std::vector<double>> values;
    std::size_t length = 0;
};

class Backbone {
public:
    Backbone(const BackboneConfig& config, Rng& rng);

    Backbone(const Backbone&) = delete;
    Backbone& operator=(const Backbone&) = delete;

    const BackboneConfig& config() const { return config_; }

    Tensor embed_tokens(std::span<const TokenId> ids) const;

    /// Logits [S x vocab] for input embeddings [S x d_model]. Counts one pass.
    /// Positions start at `position_offset` (used by text pretraining).
    Tensor forward(const Tensor& inputs, TaskKind task, const OmniLora* lora, std::size_t position_offset = 0) const;
    /// One batched pass over independent sequences.
    std::vector<Tensor> forward_batch(std::span<const Tensor> inputs, TaskKind task, const OmniLora* lora) const;

    /// Runs the prefix and returns the last row's logits, filling `cache`.
    std::vector<double> prefill(const Tensor& inputs, TaskKind task, const OmniLora* lora, KvCache& cache) const;
    /// Appends one token and returns its logits row.
    std::vector<double> extend(TokenId token, TaskKind task, const OmniLora* lora, KvCache& cache) const;

    std::uint64_t passes() const { return passes_.load(std::memory_order_relaxed); }
    void reset_passes() const { passes_.store(0, std::memory_order_relaxed); }

    /// Names follow "base.*".
    std::vector<NamedTensor> parameters() const;
    /// Content hash over names, shapes and values of the base weights.
    std::uint64_t weights_hash() const;

    const Tensor& token_embedding() const { return tok_emb_; }

private:
    Tensor forward_impl(const Tensor& inputs, TaskKind task, const OmniLora* lora, std::size_t position_offset,
                        KvCache* capture) const;

    BackboneConfig config_;
    Tensor tok_emb_;
    Tensor pos_emb_;
    std::vector<LayerWeights> layers_;
    Tensor lnf_gain_, lnf_bias_;
    Tensor head_;
    mutable std::atomic<std::uint64_t> passes_{0};
};

/// Marks every base tensor requires_grad = false.
void freeze_base(Backbone& backbone);

std::uint64_t hash_tensors(std::span<const NamedTensor> tensors);

}  // namespace omni
