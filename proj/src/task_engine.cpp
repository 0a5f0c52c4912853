#include "omni/task_engine.hpp"

#include <cmath>
#include <numbers>

#include <json.hpp>

#include "omni/error.hpp"
#include "omni/ops.hpp"

namespace omni {

namespace {

// Lets a freshly seeded engine be passed by reference inside one
// member-initialiser expression.
Rng& scratch(Rng&& rng) { return rng; }

void append(std::vector<NamedTensor>& out, std::vector<NamedTensor> more) {
    for (auto& p : more) out.push_back(std::move(p));
}

}  // namespace

OmniModel::OmniModel(const ModelConfig& config, std::uint64_t init_seed)
    : backbone(config.backbone, scratch(Rng(derive_seed(init_seed, "init.base")))),
      lora(config.lora, config.backbone, scratch(Rng(derive_seed(init_seed, "init.lora")))),
      audio_encoder(Modality::audio, config.frontend.d_raw, config.frontend.d_enc,
                    scratch(Rng(derive_seed(init_seed, "init.audio.encoder")))),
      video_encoder(Modality::video, config.frontend.d_raw, config.frontend.d_enc,
                    scratch(Rng(derive_seed(init_seed, "init.video.encoder")))),
      audio_projector(Modality::audio, config.frontend.d_enc, config.frontend.d_proj, config.backbone.d_model,
                      scratch(Rng(derive_seed(init_seed, "init.audio.projector")))),
      video_projector(Modality::video, config.frontend.d_enc, config.frontend.d_proj, config.backbone.d_model,
                      scratch(Rng(derive_seed(init_seed, "init.video.projector")))),
      config_(config) {}

std::vector<NamedTensor> OmniModel::frontend_parameters() const {
    std::vector<NamedTensor> out;
    append(out, audio_encoder.parameters());
    append(out, video_encoder.parameters());
    append(out, audio_projector.parameters());
    append(out, video_projector.parameters());
    return out;
}

std::vector<NamedTensor> OmniModel::trainable_parameters() const {
    auto out = lora.parameters();
    append(out, frontend_parameters());
    return out;
}

std::vector<NamedTensor> OmniModel::all_parameters() const {
    auto out = backbone.parameters();
    append(out, trainable_parameters());
    return out;
}

Tensor OmniModel::project_audio(const Tensor& audio_raw, CompressionRate rate) const {
    return audio_projector.project(compress(audio_encoder.encode(audio_raw, kAudioFrameRate), rate));
}

Tensor OmniModel::project_video(const Tensor& video_raw, CompressionRate rate) const {
    return video_projector.project(compress(video_encoder.encode(video_raw, kVideoFrameRate), rate));
}

// ---------------------------------------------------------------------------

std::string_view segment_name(SegmentKind kind) {
    switch (kind) {
        case SegmentKind::audio: return "audio";
        case SegmentKind::video: return "video";
        case SegmentKind::prompt: return "prompt";
        case SegmentKind::target: return "target";
    }
    return "?";
}

std::size_t TaskSequence::prefix_length() const {
    std::size_t n = 0;
    for (const auto& s : segment_map) {
        if (s.kind != SegmentKind::target) n += s.length();
    }
    return n;
}

std::vector<TokenId> task_prompt_ids(TaskKind task) {
    const auto& vocab = Vocabulary::standard();
    std::vector<TokenId> ids{vocab.word_token("Transcribe")};
    if (task == TaskKind::asr || task == TaskKind::avsr) ids.push_back(vocab.word_token("speech"));
    if (task == TaskKind::avsr) ids.push_back(vocab.word_token("and"));
    if (task == TaskKind::vsr || task == TaskKind::avsr) ids.push_back(vocab.word_token("video"));
    ids.push_back(vocab.word_token("to"));
    ids.push_back(vocab.word_token("text."));
    return ids;
}

TaskSequence assemble(TaskKind task, const Tensor& audio, const Tensor& video, std::span<const TokenId> prompt,
                      const TargetText& target) {
    const bool needs_audio = task != TaskKind::vsr;
    const bool needs_video = task != TaskKind::asr;
    if (needs_audio && !audio.defined()) {
        fail(ErrorKind::assembly, std::string(task_name(task)) + " sequence requires an audio segment");
    }
    if (needs_video && !video.defined()) {
        fail(ErrorKind::assembly, std::string(task_name(task)) + " sequence requires a video segment");
    }
    if (prompt.empty()) fail(ErrorKind::assembly, "empty prompt");

    TaskSequence seq;
    seq.task = task;
    std::size_t pos = 0;
    auto add_span = [&](SegmentKind kind, std::size_t n) {
        seq.segment_map.push_back({kind, pos, pos + n});
        pos += n;
    };
    if (needs_audio) {
        seq.audio = audio;
        add_span(SegmentKind::audio, audio.rows());
    }
    if (needs_video) {
        seq.video = video;
        add_span(SegmentKind::video, video.rows());
    }
    seq.prompt.assign(prompt.begin(), prompt.end());
    add_span(SegmentKind::prompt, prompt.size());
    seq.target = target;
    if (!target.ids.empty()) add_span(SegmentKind::target, target.ids.size());
    seq.loss_mask.assign(pos, 0);
    for (std::size_t p = pos - target.ids.size(); p < pos; ++p) seq.loss_mask[p] = 1;
    return seq;
}

Tensor embed_sequence(const Backbone& backbone, const TaskSequence& seq, bool with_target) {
    std::vector<Tensor> parts;
    if (seq.audio.defined() && seq.task != TaskKind::vsr) parts.push_back(seq.audio);
    if (seq.video.defined() && seq.task != TaskKind::asr) parts.push_back(seq.video);
    std::vector<TokenId> ids = seq.prompt;
    if (with_target) ids.insert(ids.end(), seq.target.ids.begin(), seq.target.ids.end());
    parts.push_back(backbone.embed_tokens(ids));
    return parts.size() == 1 ? parts.front() : concat_time(parts);
}

ShiftedTargets shift_targets(const TaskSequence& seq) {
    const std::size_t n = seq.length();
    const std::size_t target_begin = n - seq.target.ids.size();
    ShiftedTargets out;
    out.targets.assign(n, Vocabulary::kPad);
    out.mask.assign(n, 0);
    for (std::size_t p = target_begin; p < n; ++p) {
        if (p == 0) fail(ErrorKind::assembly, "target token at position 0 has no predecessor");
        out.targets[p - 1] = seq.target.ids[p - target_begin];
        out.mask[p - 1] = seq.loss_mask[p];
    }
    return out;
}

namespace {

Tensor loss_from_logits(const Tensor& logits, const TaskSequence& seq) {
    const auto shifted = shift_targets(seq);
    return softmax_cross_entropy(logits, shifted.targets, shifted.mask);
}

}  // namespace

Tensor sequence_loss(const Backbone& backbone, const OmniLora* lora, const TaskSequence& seq) {
    return loss_from_logits(backbone.forward(embed_sequence(backbone, seq), seq.task, lora), seq);
}

// ---------------------------------------------------------------------------

double LossWeights::operator[](TaskKind task) const {
    switch (task) {
        case TaskKind::asr: return asr;
        case TaskKind::vsr: return vsr;
        case TaskKind::avsr: return avsr;
    }
    return 0.0;
}

void LossWeights::validate() const {
    for (double w : {asr, vsr, avsr}) {
        if (!(w >= 0.0) || !std::isfinite(w)) fail(ErrorKind::validation, "loss weights must be finite and >= 0");
    }
    if (asr + vsr + avsr <= 0.0) fail(ErrorKind::validation, "at least one loss weight must be positive");
}

const TaskSequence& TaskTriple::operator[](TaskKind task) const {
    switch (task) {
        case TaskKind::asr: return asr;
        case TaskKind::vsr: return vsr;
        case TaskKind::avsr: return avsr;
    }
    return asr;
}

void check_triple(const TaskTriple& triple) {
    for (auto t : kAllTasks) {
        if (triple[t].task != t) fail(ErrorKind::consistency, "triple slot holds a sequence of another task");
    }
    const auto id = triple.asr.utterance_id;
    if (triple.vsr.utterance_id != id || triple.avsr.utterance_id != id) {
        fail(ErrorKind::consistency, "triple mixes utterances " + std::to_string(id) + ", " +
                                         std::to_string(triple.vsr.utterance_id) + ", " +
                                         std::to_string(triple.avsr.utterance_id));
    }
    if (triple.asr.audio_rate != triple.avsr.audio_rate || triple.vsr.video_rate != triple.avsr.video_rate) {
        fail(ErrorKind::consistency, "triple sequences were compressed at different rates");
    }
}

namespace {

Tensor weighted_sum(const std::array<Tensor, kTaskCount>& losses, const LossWeights& weights) {
    Tensor total = scale(losses[0], weights.asr);
    total = add(total, scale(losses[1], weights.vsr));
    return add(total, scale(losses[2], weights.avsr));
}

}  // namespace

OmniLoss omni_loss(const Backbone& backbone, const OmniLora* lora, const TaskTriple& triple,
                   const LossWeights& weights) {
    weights.validate();
    check_triple(triple);
    std::array<Tensor, kTaskCount> losses;
    OmniLoss out;
    for (auto t : kAllTasks) {
        losses[task_index(t)] = sequence_loss(backbone, lora, triple[t]);
        out.per_task[task_index(t)] = losses[task_index(t)].item();
    }
    out.total = weighted_sum(losses, weights);
    return out;
}

OmniLoss omni_batch_loss(const Backbone& backbone, const OmniLora* lora, std::span<const TaskTriple> batch,
                         const LossWeights& weights) {
    weights.validate();
    if (batch.empty()) fail(ErrorKind::contract, "empty batch");
    for (const auto& triple : batch) check_triple(triple);
    const double inv_n = 1.0 / static_cast<double>(batch.size());
    std::array<Tensor, kTaskCount> losses;
    OmniLoss out;
    for (auto t : kAllTasks) {
        std::vector<Tensor> inputs;
        inputs.reserve(batch.size());
        for (const auto& triple : batch) inputs.push_back(embed_sequence(backbone, triple[t]));
        const auto logits = backbone.forward_batch(inputs, t, lora);
        Tensor acc;
        for (std::size_t i = 0; i < batch.size(); ++i) {
            Tensor l = loss_from_logits(logits[i], batch[i][t]);
            acc = acc.defined() ? add(acc, l) : l;
        }
        losses[task_index(t)] = scale(acc, inv_n);
        out.per_task[task_index(t)] = losses[task_index(t)].item();
    }
    out.total = weighted_sum(losses, weights);
    return out;
}

// ---------------------------------------------------------------------------

RatePair sample_rates(Rng& rng, const RateMenu& menu) {
    menu.validate();
    const auto a = menu.audio_rates[uniform_index(rng, menu.audio_rates.size())];
    const auto v = menu.video_rates[uniform_index(rng, menu.video_rates.size())];
    return RatePair{a, v};
}

TaskTriple build_triple(const OmniModel& model, const SyntheticUtterance& utt, RatePair rates,
                        const Tensor* noisy_audio) {
    const Tensor za = model.project_audio(noisy_audio ? *noisy_audio : utt.audio_raw, rates.audio);
    const Tensor zv = model.project_video(utt.video_raw, rates.video);
    TaskTriple triple;
    auto make = [&](TaskKind t) {
        TaskSequence seq = assemble(t, za, zv, task_prompt_ids(t), utt.target);
        seq.utterance_id = utt.id;
        if (t != TaskKind::vsr) seq.audio_rate = rates.audio;
        if (t != TaskKind::asr) seq.video_rate = rates.video;
        return seq;
    };
    triple.asr = make(TaskKind::asr);
    triple.vsr = make(TaskKind::vsr);
    triple.avsr = make(TaskKind::avsr);
    return triple;
}

// ---------------------------------------------------------------------------

std::string_view method_name(Method method) {
    switch (method) {
        case Method::llama_avsr: return "Llama-AVSR";
        case Method::llama_mtsk: return "Llama-MTSK";
        case Method::llama_mt: return "Llama-MT";
        case Method::omni: return "Omni-AVSR";
    }
    return "?";
}

CostReport count_cost(Method method, std::uint64_t tasks, std::uint64_t audio_rates, std::uint64_t video_rates) {
    if (tasks == 0 || audio_rates == 0 || video_rates == 0) {
        fail(ErrorKind::validation, "task and rate counts must be >= 1");
    }
    const std::uint64_t per_rate = audio_rates + video_rates + audio_rates * video_rates;
    switch (method) {
        case Method::llama_avsr: return {method, per_rate, per_rate};
        case Method::llama_mtsk: return {method, tasks, per_rate};
        case Method::llama_mt: return {method, audio_rates * video_rates, tasks * audio_rates * video_rates};
        case Method::omni: return {method, 1, tasks};
    }
    fail(ErrorKind::validation, "unknown method");
}

// ---------------------------------------------------------------------------

void AdamWConfig::validate() const {
    if (!(lr_max > 0.0) || !(lr_min >= 0.0) || lr_min > lr_max) {
        fail(ErrorKind::validation, "learning rates must satisfy 0 <= lr_min <= lr_max, lr_max > 0");
    }
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
        fail(ErrorKind::validation, "AdamW betas must lie in [0, 1)");
    }
    if (!(eps > 0.0)) fail(ErrorKind::validation, "AdamW eps must be positive");
    if (!(weight_decay >= 0.0)) fail(ErrorKind::validation, "weight decay must be >= 0");
    if (total_steps == 0) fail(ErrorKind::validation, "total steps must be >= 1");
}

double cosine_lr(const AdamWConfig& config, std::size_t step) {
    const double t = static_cast<double>(std::min(step, config.total_steps));
    const double frac = t / static_cast<double>(config.total_steps);
    return config.lr_min + 0.5 * (config.lr_max - config.lr_min) * (1.0 + std::cos(std::numbers::pi * frac));
}

AdamW::AdamW(std::vector<NamedTensor> params, const AdamWConfig& config)
    : params_(std::move(params)), config_(config) {
    config_.validate();
    for (const auto& p : params_) {
        m_.emplace_back(p.tensor.size(), 0.0);
        v_.emplace_back(p.tensor.size(), 0.0);
    }
}

void AdamW::step(double lr) {
    ++t_;
    const double b1 = config_.beta1, b2 = config_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Tensor& p = params_[i].tensor;
        if (!p.requires_grad() || !p.has_grad()) continue;
        const auto g = p.grad();
        auto w = p.mutable_data();
        auto& m = m_[i];
        auto& v = v_[i];
        for (std::size_t j = 0; j < w.size(); ++j) {
            w[j] -= lr * config_.weight_decay * w[j];
            m[j] = b1 * m[j] + (1.0 - b1) * g[j];
            v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
            const double mhat = m[j] / c1;
            const double vhat = v[j] / c2;
            w[j] -= lr * mhat / (std::sqrt(vhat) + config_.eps);
        }
    }
}

void AdamW::zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
}

std::vector<NamedTensor> AdamW::export_state() const {
    std::vector<NamedTensor> out;
    for (std::size_t i = 0; i < params_.size(); ++i) {
        const auto& shape = params_[i].tensor.shape();
        out.push_back({"optim.m." + params_[i].name, Tensor(shape, m_[i])});
        out.push_back({"optim.v." + params_[i].name, Tensor(shape, v_[i])});
    }
    return out;
}

void AdamW::import_state(std::span<const NamedTensor> state, std::size_t step_count) {
    auto find = [&](const std::string& name) -> const Tensor& {
        for (const auto& s : state) {
            if (s.name == name) return s.tensor;
        }
        fail(ErrorKind::compatibility, "optimizer state lacks '" + name + "'");
    };
    for (std::size_t i = 0; i < params_.size(); ++i) {
        const Tensor& m = find("optim.m." + params_[i].name);
        const Tensor& v = find("optim.v." + params_[i].name);
        if (m.size() != m_[i].size() || v.size() != v_[i].size()) {
            fail(ErrorKind::compatibility, "optimizer state for '" + params_[i].name + "' has the wrong size");
        }
        m_[i].assign(m.data().begin(), m.data().end());
        v_[i].assign(v.data().begin(), v.data().end());
    }
    t_ = step_count;
}

// ---------------------------------------------------------------------------

void AugmentConfig::validate() const {
    if (!(noise_prob >= 0.0 && noise_prob <= 1.0)) fail(ErrorKind::validation, "augment.noise_prob must be in [0, 1]");
    if (!std::isfinite(snr_min) || !std::isfinite(snr_max) || snr_min > snr_max) {
        fail(ErrorKind::validation, "augment SNR range must be finite with snr_min <= snr_max");
    }
}

std::string StepMetrics::to_json() const {
    nlohmann::ordered_json j;
    j["type"] = "step";
    j["step"] = step;
    j["loss_asr"] = task_loss[0];
    j["loss_vsr"] = task_loss[1];
    j["loss_avsr"] = task_loss[2];
    j["loss"] = total_loss;
    j["sampled_audio_rate"] = audio_rate;
    j["sampled_video_rate"] = video_rate;
    j["lr"] = lr;
    j["passes"] = passes;
    return j.dump();
}

StepMetrics train_step(OmniModel& model, const TrainStepInputs& in, AdamW& optimizer, Rng& rate_rng,
                       std::size_t step) {
    if (in.menu == nullptr) fail(ErrorKind::contract, "train_step needs a rate menu");
    if (in.batch.empty()) fail(ErrorKind::contract, "train_step needs a nonempty batch");
    const RatePair rates = sample_rates(rate_rng, *in.menu);

    std::vector<TaskTriple> triples;
    triples.reserve(in.batch.size());
    for (const auto* utt : in.batch) {
        if (in.augment.noise_prob > 0.0) {
            if (in.noise_pool == nullptr) fail(ErrorKind::contract, "noise augmentation needs a noise pool");
            Rng rng(derive_seed(in.noise_seed, utt->id));
            if (uniform01(rng) < in.augment.noise_prob) {
                const double snr = uniform(rng, in.augment.snr_min, in.augment.snr_max);
                const Tensor noisy = add_noise(utt->audio_raw, snr, *in.noise_pool, utt->id, rng);
                triples.push_back(build_triple(model, *utt, rates, &noisy));
                continue;
            }
        }
        triples.push_back(build_triple(model, *utt, rates));
    }

    model.backbone.reset_passes();
    const OmniLoss loss = omni_batch_loss(model.backbone, &model.lora, triples, in.weights);
    StepMetrics metrics;
    metrics.step = step;
    metrics.passes = model.backbone.passes();
    metrics.task_loss = loss.per_task;
    metrics.total_loss = loss.total.item();
    metrics.audio_rate = rates.audio.value();
    metrics.video_rate = rates.video.value();
    metrics.lr = cosine_lr(optimizer.config(), step);

    optimizer.zero_grad();
    backward(loss.total);
    optimizer.step(metrics.lr);
    return metrics;
}

}  // namespace omni
