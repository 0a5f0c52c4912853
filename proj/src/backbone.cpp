#include "omni/backbone.hpp"

#include <cmath>

#include "omni/error.hpp"
#include "omni/kernels_internal.hpp"

namespace omni {

std::string_view task_name(TaskKind task) {
    switch (task) {
        case TaskKind::asr: return "ASR";
        case TaskKind::vsr: return "VSR";
        case TaskKind::avsr: return "AVSR";
    }
    return "?";
}

std::optional<TaskKind> parse_task(std::string_view name) {
    for (auto t : kAllTasks) {
        if (task_name(t) == name) return t;
    }
    if (name == "asr") return TaskKind::asr;
    if (name == "vsr") return TaskKind::vsr;
    if (name == "avsr") return TaskKind::avsr;
    return std::nullopt;
}

void BackboneConfig::validate() const {
    if (d_model == 0 || n_layers == 0 || n_heads == 0 || d_ff == 0 || vocab_size == 0 || max_len == 0) {
        fail(ErrorKind::validation, "backbone extents must all be >= 1");
    }
    if (d_model % n_heads != 0) {
        fail(ErrorKind::validation, "d_model " + std::to_string(d_model) + " is not divisible by n_heads " +
                                        std::to_string(n_heads));
    }
}

std::string_view variant_tag(LoraVariant variant) {
    switch (variant) {
        case LoraVariant::shared: return "S";
        case LoraVariant::task: return "T";
        case LoraVariant::shared_task: return "ST";
    }
    return "?";
}

std::optional<LoraVariant> parse_variant(std::string_view tag) {
    if (tag == "S") return LoraVariant::shared;
    if (tag == "T") return LoraVariant::task;
    if (tag == "ST") return LoraVariant::shared_task;
    return std::nullopt;
}

AdapterGroup group_of(TaskKind task) { return static_cast<AdapterGroup>(task_index(task) + 1); }

std::string_view group_name(AdapterGroup group) {
    switch (group) {
        case AdapterGroup::shared: return "shared";
        case AdapterGroup::asr: return "asr";
        case AdapterGroup::vsr: return "vsr";
        case AdapterGroup::avsr: return "avsr";
    }
    return "?";
}

namespace {

Tensor uniform_tensor(Shape shape, double bound, Rng& rng, bool requires_grad) {
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = uniform(rng, -bound, bound);
    return Tensor(std::move(shape), std::move(v), requires_grad);
}

// Learned table started from sinusoids (per-dimension rms `rms`), so
// relative offsets are linearly readable from the first step.
Tensor sinusoid_table(std::size_t rows, std::size_t d, double rms) {
    std::vector<double> v(rows * d);
    const double amp = rms * std::sqrt(2.0);
    for (std::size_t p = 0; p < rows; ++p) {
        for (std::size_t i = 0; i < d; ++i) {
            const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(d));
            const double angle = static_cast<double>(p) * freq;
            v[p * d + i] = amp * (i % 2 == 0 ? std::sin(angle) : std::cos(angle));
        }
    }
    return Tensor({rows, d}, std::move(v), true);
}

Tensor normal_tensor(Shape shape, double stddev, Rng& rng) {
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = stddev * normal(rng);
    return Tensor(std::move(shape), std::move(v), true);
}

Tensor filled(Shape shape, double value) {
    return Tensor(shape, std::vector<double>(shape_numel(shape), value), true);
}

LoraAdapter make_adapter(const BackboneConfig& b, const LoraConfig& c, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(b.d_model));
    return LoraAdapter{uniform_tensor({b.d_model, c.rank}, bound, rng, true), Tensor::zeros({c.rank, b.d_model}, true),
                       c.rank, c.alpha};
}

std::string site_name(std::size_t index) {
    return "layer" + std::to_string(index / 2) + (index % 2 == 0 ? ".q" : ".v");
}

}  // namespace

OmniLora::OmniLora(const LoraConfig& config, const BackboneConfig& backbone, Rng& rng)
    : config_(config), sites_(2 * backbone.n_layers) {
    if (config.rank == 0 || config.rank >= backbone.d_model) {
        fail(ErrorKind::validation, "LoRA rank must satisfy 1 <= r < d_model");
    }
    if (!(config.alpha > 0.0)) fail(ErrorKind::validation, "LoRA alpha must be positive");
    if (config.variant != LoraVariant::task) {
        for (std::size_t s = 0; s < sites_; ++s) shared_.push_back(make_adapter(backbone, config, rng));
    }
    if (config.variant != LoraVariant::shared) {
        for (auto& group : per_task_) {
            for (std::size_t s = 0; s < sites_; ++s) group.push_back(make_adapter(backbone, config, rng));
        }
    }
}

OmniLora::OmniLora(const OmniLora& other) : config_(other.config_), sites_(other.sites_) {
    auto copy = [](const LoraAdapter& a) {
        return LoraAdapter{a.down.detach_copy(a.down.requires_grad()), a.up.detach_copy(a.up.requires_grad()),
                           a.rank, a.alpha};
    };
    for (const auto& a : other.shared_) shared_.push_back(copy(a));
    for (std::size_t t = 0; t < kTaskCount; ++t) {
        for (const auto& a : other.per_task_[t]) per_task_[t].push_back(copy(a));
    }
}

const LoraAdapter* OmniLora::shared_adapter(AdapterSite site) const {
    if (shared_.empty() || site.index() >= sites_) return nullptr;
    return &shared_[site.index()];
}

const LoraAdapter* OmniLora::task_adapter(TaskKind task, AdapterSite site) const {
    const auto& group = per_task_[task_index(task)];
    if (group.empty() || site.index() >= sites_) return nullptr;
    return &group[site.index()];
}

LoraAdapter& OmniLora::shared_at(AdapterSite site) {
    if (shared_.empty() || site.index() >= sites_) {
        fail(ErrorKind::configuration, "variant " + std::string(variant_tag(variant())) + " has no shared adapter at " +
                                           site_name(site.index()));
    }
    return shared_[site.index()];
}

LoraAdapter& OmniLora::task_at(TaskKind task, AdapterSite site) {
    auto& group = per_task_[task_index(task)];
    if (group.empty() || site.index() >= sites_) {
        fail(ErrorKind::configuration, "variant " + std::string(variant_tag(variant())) + " has no " +
                                           std::string(task_name(task)) + " adapter at " + site_name(site.index()));
    }
    return group[site.index()];
}

std::vector<NamedTensor> OmniLora::parameters() const {
    std::vector<NamedTensor> out;
    auto emit = [&](std::string_view group, const std::vector<LoraAdapter>& adapters) {
        for (std::size_t s = 0; s < adapters.size(); ++s) {
            const std::string prefix = "lora." + std::string(group) + "." + site_name(s);
            out.push_back({prefix + ".down", adapters[s].down});
            out.push_back({prefix + ".up", adapters[s].up});
        }
    };
    emit("shared", shared_);
    for (auto t : kAllTasks) emit(group_name(group_of(t)), per_task_[task_index(t)]);
    return out;
}

void OmniLora::note_read(AdapterGroup group) const {
    reads_[static_cast<std::size_t>(group)].fetch_add(1, std::memory_order_relaxed);
}

std::uint64_t OmniLora::reads(AdapterGroup group) const {
    return reads_[static_cast<std::size_t>(group)].load(std::memory_order_relaxed);
}

void OmniLora::reset_reads() const {
    for (auto& r : reads_) r.store(0, std::memory_order_relaxed);
}

Tensor lora_project(const Tensor& z, AdapterSite site, TaskKind task, const OmniLora* lora, const Tensor& weight) {
    Tensor out = matmul(z, weight);
    if (lora == nullptr) return out;
    const bool wants_shared = lora->variant() != LoraVariant::task;
    const bool wants_task = lora->variant() != LoraVariant::shared;
    if (wants_shared) {
        const LoraAdapter* a = lora->shared_adapter(site);
        if (a == nullptr) fail(ErrorKind::configuration, "missing shared adapter for site " + site_name(site.index()));
        lora->note_read(AdapterGroup::shared);
        out = add(out, scale(matmul(matmul(z, a->down), a->up), a->alpha));
    }
    if (wants_task) {
        const LoraAdapter* a = lora->task_adapter(task, site);
        if (a == nullptr) {
            fail(ErrorKind::configuration, "missing " + std::string(task_name(task)) + " adapter for site " +
                                               site_name(site.index()));
        }
        lora->note_read(group_of(task));
        out = add(out, scale(matmul(matmul(z, a->down), a->up), a->alpha));
    }
    return out;
}

std::size_t trainable_parameter_count(LoraVariant variant, const BackboneConfig& config, std::size_t rank) {
    const std::size_t one_group = config.n_layers * 2 * (2 * config.d_model * rank);
    switch (variant) {
        case LoraVariant::shared: return one_group;
        case LoraVariant::task: return kTaskCount * one_group;
        case LoraVariant::shared_task: return (kTaskCount + 1) * one_group;
    }
    return 0;
}

// ---------------------------------------------------------------------------

Backbone::Backbone(const BackboneConfig& config, Rng& rng) : config_(config) {
    config.validate();
    const std::size_t d = config.d_model;
    const double w_std = 1.0 / std::sqrt(static_cast<double>(d));
    const double out_std = w_std / std::sqrt(2.0 * static_cast<double>(config.n_layers));
    tok_emb_ = normal_tensor({config.vocab_size, d}, 0.1, rng);
    pos_emb_ = normal_tensor({config.max_len, d}, 0.1, rng);
    for (std::size_t l = 0; l < config.n_layers; ++l) {
        LayerWeights w;
        w.ln1_gain = filled({d}, 1.0);
        w.ln1_bias = filled({d}, 0.0);
        w.wq = normal_tensor({d, d}, w_std, rng);
        w.wk = normal_tensor({d, d}, w_std, rng);
        w.wv = normal_tensor({d, d}, w_std, rng);
        w.wo = normal_tensor({d, d}, out_std, rng);
        w.ln2_gain = filled({d}, 1.0);
        w.ln2_bias = filled({d}, 0.0);
        w.ff1_weight = normal_tensor({d, config.d_ff}, w_std, rng);
        w.ff1_bias = filled({config.d_ff}, 0.0);
        w.ff2_weight =
            normal_tensor({config.d_ff, d}, 1.0 / std::sqrt(2.0 * config.d_ff * config.n_layers), rng);
        w.ff2_bias = filled({d}, 0.0);
        layers_.push_back(std::move(w));
    }
    lnf_gain_ = filled({d}, 1.0);
    lnf_bias_ = filled({d}, 0.0);
    head_ = normal_tensor({d, config.vocab_size}, w_std, rng);
}

Tensor Backbone::embed_tokens(std::span<const TokenId> ids) const { return embedding_lookup(tok_emb_, ids); }

Tensor Backbone::forward(const Tensor& inputs, TaskKind task, const OmniLora* lora,
                         std::size_t position_offset) const {
    passes_.fetch_add(1, std::memory_order_relaxed);
    return forward_impl(inputs, task, lora, position_offset, nullptr);
}

std::vector<Tensor> Backbone::forward_batch(std::span<const Tensor> inputs, TaskKind task,
                                            const OmniLora* lora) const {
    passes_.fetch_add(1, std::memory_order_relaxed);
    std::vector<Tensor> out;
    out.reserve(inputs.size());
    for (const auto& x : inputs) out.push_back(forward_impl(x, task, lora, 0, nullptr));
    return out;
}

Tensor Backbone::forward_impl(const Tensor& inputs, TaskKind task, const OmniLora* lora,
                              std::size_t position_offset, KvCache* capture) const {
    const std::size_t s_len = inputs.rows();
    if (inputs.cols() != config_.d_model) {
        fail(ErrorKind::dimension, "backbone input " + shape_to_string(inputs.shape()) + " does not have width " +
                                       std::to_string(config_.d_model));
    }
    if (position_offset + s_len > config_.max_len) {
        fail(ErrorKind::length, "sequence of " + std::to_string(s_len) + " positions (offset " +
                                    std::to_string(position_offset) + ") exceeds max_len " +
                                    std::to_string(config_.max_len));
    }
    if (capture) {
        capture->keys.assign(config_.n_layers, {});
        capture->values.assign(config_.n_layers, {});
        capture->length = s_len;
    }
    Tensor h = add(inputs, slice_time(pos_emb_, position_offset, position_offset + s_len));
    for (std::size_t l = 0; l < config_.n_layers; ++l) {
        const LayerWeights& w = layers_[l];
        Tensor a = layer_norm(h, w.ln1_gain, w.ln1_bias);
        Tensor q = lora_project(a, {l, Projection::query}, task, lora, w.wq);
        Tensor k = matmul(a, w.wk);
        Tensor v = lora_project(a, {l, Projection::value}, task, lora, w.wv);
        if (capture) {
            capture->keys[l].assign(k.data().begin(), k.data().end());
            capture->values[l].assign(v.data().begin(), v.data().end());
        }
        Tensor att = causal_attention(q, k, v, config_.n_heads);
        h = add(h, matmul(att, w.wo));
        Tensor f = layer_norm(h, w.ln2_gain, w.ln2_bias);
        f = relu(add_bias(matmul(f, w.ff1_weight), w.ff1_bias));
        f = add_bias(matmul(f, w.ff2_weight), w.ff2_bias);
        h = add(h, f);
    }
    return matmul(layer_norm(h, lnf_gain_, lnf_bias_), head_);
}

std::vector<double> Backbone::prefill(const Tensor& inputs, TaskKind task, const OmniLora* lora,
                                      KvCache& cache) const {
    NoGradGuard no_grad;
    passes_.fetch_add(1, std::memory_order_relaxed);
    Tensor logits = forward_impl(inputs, task, lora, 0, &cache);
    const auto all = logits.data();
    const std::size_t v = config_.vocab_size;
    return std::vector<double>(all.end() - static_cast<std::ptrdiff_t>(v), all.end());
}

namespace {

// Row-wise mirror of lora_project: same kernels, same operation order.
void project_row(std::span<const double> z, AdapterSite site, TaskKind task, const OmniLora* lora,
                 const Tensor& weight, std::span<double> out) {
    const std::size_t d_in = z.size(), d_out = out.size();
    kernels::matmul(z, weight.data(), out, 1, d_in, d_out);
    if (lora == nullptr) return;
    auto apply = [&](const LoraAdapter& a) {
        std::vector<double> low(a.rank), delta(d_out);
        kernels::matmul(z, a.down.data(), low, 1, d_in, a.rank);
        kernels::matmul(low, a.up.data(), delta, 1, a.rank, d_out);
        for (std::size_t j = 0; j < d_out; ++j) out[j] = out[j] + delta[j] * a.alpha;
    };
    if (lora->variant() != LoraVariant::task) {
        const LoraAdapter* a = lora->shared_adapter(site);
        if (a == nullptr) fail(ErrorKind::configuration, "missing shared adapter");
        lora->note_read(AdapterGroup::shared);
        apply(*a);
    }
    if (lora->variant() != LoraVariant::shared) {
        const LoraAdapter* a = lora->task_adapter(task, site);
        if (a == nullptr) fail(ErrorKind::configuration, "missing task adapter");
        lora->note_read(group_of(task));
        apply(*a);
    }
}

}  // namespace

std::vector<double> Backbone::extend(TokenId token, TaskKind task, const OmniLora* lora, KvCache& cache) const {
    const std::size_t d = config_.d_model;
    const std::size_t pos = cache.length;
    if (pos + 1 > config_.max_len) {
        fail(ErrorKind::length, "decoding past max_len " + std::to_string(config_.max_len));
    }
    if (token < 0 || static_cast<std::size_t>(token) >= config_.vocab_size) {
        fail(ErrorKind::index, "token id " + std::to_string(token) + " outside vocabulary");
    }
    if (cache.keys.size() != config_.n_layers) fail(ErrorKind::contract, "extend on an unfilled cache");

    const auto emb = tok_emb_.data().subspan(static_cast<std::size_t>(token) * d, d);
    const auto pe = pos_emb_.data().subspan(pos * d, d);
    std::vector<double> h(d), a(d), q(d), k(d), v(d), att(d), tmp(d), f1(config_.d_ff), f2(d);
    for (std::size_t j = 0; j < d; ++j) h[j] = emb[j] + pe[j];
    for (std::size_t l = 0; l < config_.n_layers; ++l) {
        const LayerWeights& w = layers_[l];
        kernels::layer_norm_row(h, w.ln1_gain.data(), w.ln1_bias.data(), a, 1e-5);
        project_row(a, {l, Projection::query}, task, lora, w.wq, q);
        kernels::matmul(a, w.wk.data(), k, 1, d, d);
        project_row(a, {l, Projection::value}, task, lora, w.wv, v);
        cache.keys[l].insert(cache.keys[l].end(), k.begin(), k.end());
        cache.values[l].insert(cache.values[l].end(), v.begin(), v.end());
        kernels::attention_row(q.data(), cache.keys[l].data(), cache.values[l].data(), pos + 1, d, config_.n_heads,
                               att.data());
        kernels::matmul(att, w.wo.data(), tmp, 1, d, d);
        for (std::size_t j = 0; j < d; ++j) h[j] = h[j] + tmp[j];
        kernels::layer_norm_row(h, w.ln2_gain.data(), w.ln2_bias.data(), a, 1e-5);
        kernels::matmul(a, w.ff1_weight.data(), f1, 1, d, config_.d_ff);
        const auto b1 = w.ff1_bias.data();
        for (std::size_t j = 0; j < config_.d_ff; ++j) {
            const double x = f1[j] + b1[j];
            f1[j] = x > 0.0 ? x : 0.0;
        }
        kernels::matmul(f1, w.ff2_weight.data(), f2, 1, config_.d_ff, d);
        const auto b2 = w.ff2_bias.data();
        for (std::size_t j = 0; j < d; ++j) h[j] = h[j] + (f2[j] + b2[j]);
    }
    cache.length = pos + 1;
    kernels::layer_norm_row(h, lnf_gain_.data(), lnf_bias_.data(), a, 1e-5);
    std::vector<double> logits(config_.vocab_size);
    kernels::matmul(a, head_.data(), logits, 1, d, config_.vocab_size);
    return logits;
}

std::vector<NamedTensor> Backbone::parameters() const {
    std::vector<NamedTensor> out{{"base.tok_emb", tok_emb_}, {"base.pos_emb", pos_emb_}};
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const std::string p = "base.layer" + std::to_string(l) + ".";
        const LayerWeights& w = layers_[l];
        out.push_back({p + "ln1.gain", w.ln1_gain});
        out.push_back({p + "ln1.bias", w.ln1_bias});
        out.push_back({p + "wq", w.wq});
        out.push_back({p + "wk", w.wk});
        out.push_back({p + "wv", w.wv});
        out.push_back({p + "wo", w.wo});
        out.push_back({p + "ln2.gain", w.ln2_gain});
        out.push_back({p + "ln2.bias", w.ln2_bias});
        out.push_back({p + "ff1.weight", w.ff1_weight});
        out.push_back({p + "ff1.bias", w.ff1_bias});
        out.push_back({p + "ff2.weight", w.ff2_weight});
        out.push_back({p + "ff2.bias", w.ff2_bias});
    }
    out.push_back({"base.lnf.gain", lnf_gain_});
    out.push_back({"base.lnf.bias", lnf_bias_});
    out.push_back({"base.head", head_});
    return out;
}

std::uint64_t hash_tensors(std::span<const NamedTensor> tensors) {
    Fnv1a h;
    for (const auto& [name, t] : tensors) {
        h.update(name);
        for (auto e : t.shape()) {
            const std::uint64_t x = e;
            h.update(&x, sizeof x);
        }
        const auto d = t.data();
        h.update(d.data(), d.size() * sizeof(double));
    }
    return h.digest();
}

std::uint64_t Backbone::weights_hash() const {
    const auto params = parameters();
    return hash_tensors(params);
}

void freeze_base(Backbone& backbone) {
    for (auto& p : backbone.parameters()) p.tensor.set_requires_grad(false);
}

}  // namespace omni
