#include "omni/pipeline.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <cmath>
#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "omni/error.hpp"

namespace omni {

std::string hex64(std::uint64_t value) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
    return buf;
}

namespace {

std::uint64_t parse_hex64(const std::string& text) {
    try {
        return std::stoull(text, nullptr, 16);
    } catch (const std::exception&) {
        fail(ErrorKind::io, "malformed hash '" + text + "' in checkpoint metadata");
    }
}

std::uint64_t init_seed(const RunConfig& config) { return derive_seed(config.seed, "init"); }

void ensure_directory(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) fail(ErrorKind::io, "cannot create '" + dir.string() + "': " + ec.message());
}

std::ofstream open_log(const std::filesystem::path& path, bool append) {
    std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
    if (!out) fail(ErrorKind::io, "cannot open '" + path.string() + "' for writing");
    return out;
}

void check_corpus(const Corpus& corpus, const RunConfig& config) {
    if (corpus.utterances.empty()) fail(ErrorKind::validation, "corpus is empty");
    if (corpus.config.d_raw != config.corpus.d_raw) {
        fail(ErrorKind::compatibility, "corpus feature width " + std::to_string(corpus.config.d_raw) +
                                           " differs from config d_raw " + std::to_string(config.corpus.d_raw));
    }
}

void check_backbone_compatible(const BackboneConfig& have, const BackboneConfig& want) {
    if (have == want) return;
    std::ostringstream os;
    os << "base checkpoint backbone (d_model " << have.d_model << ", layers " << have.n_layers << ", heads "
       << have.n_heads << ", d_ff " << have.d_ff << ", vocab " << have.vocab_size << ", max_len " << have.max_len
       << ") does not match the run config (d_model " << want.d_model << ", layers " << want.n_layers << ", heads "
       << want.n_heads << ", d_ff " << want.d_ff << ", vocab " << want.vocab_size << ", max_len " << want.max_len
       << ")";
    fail(ErrorKind::compatibility, os.str());
}

}  // namespace

// ---------------------------------------------------------------------------

std::string encode_meta(const CheckpointMeta& meta) {
    std::ostringstream os;
    os << "kind=" << meta.kind << "\nstep=" << meta.step << "\nbase_hash=" << hex64(meta.base_hash) << "\n";
    for (const auto& [k, v] : meta.extra) os << k << "=" << v << "\n";
    os << "config:\n" << serialize_run_config(meta.config);
    return os.str();
}

CheckpointMeta decode_meta(const std::string& text) {
    CheckpointMeta meta;
    const auto split = text.find("config:\n");
    if (split == std::string::npos) fail(ErrorKind::io, "checkpoint metadata lacks a config block");
    std::istringstream is(text.substr(0, split));
    std::string line;
    while (std::getline(is, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
        if (key == "kind") meta.kind = value;
        else if (key == "step") meta.step = std::stoull(value);
        else if (key == "base_hash") meta.base_hash = parse_hex64(value);
        else meta.extra[key] = value;
    }
    try {
        meta.config = parse_run_config(text.substr(split + 8));
    } catch (const Error& e) {
        fail(ErrorKind::compatibility, std::string("checkpoint config is not readable: ") + e.what());
    }
    return meta;
}

void save_base_checkpoint(const std::filesystem::path& path, const Backbone& backbone, const CheckpointMeta& meta) {
    Container c;
    c.metadata = encode_meta(meta);
    for (const auto& p : backbone.parameters()) c.entries.push_back({p.name, p.tensor, true});
    write_container(path, c);
}

void save_omni_checkpoint(const std::filesystem::path& path, const OmniModel& model, const RunConfig& config,
                          const AdamW* optimizer, const TrainState& state) {
    CheckpointMeta meta;
    meta.kind = "omni";
    meta.step = state.step;
    meta.base_hash = model.backbone.weights_hash();
    meta.config = config;
    meta.extra["rate_rng"] = rng_state(state.rate_rng);
    if (optimizer != nullptr) meta.extra["adam_step"] = std::to_string(optimizer->step_count());
    Container c;
    c.metadata = encode_meta(meta);
    for (const auto& p : model.backbone.parameters()) c.entries.push_back({p.name, p.tensor, true});
    for (const auto& p : model.trainable_parameters()) c.entries.push_back({p.name, p.tensor, false});
    if (optimizer != nullptr) {
        for (auto& s : optimizer->export_state()) c.entries.push_back({s.name, s.tensor, true});
    }
    write_container(path, c);
}

void restore_tensors(const Container& container, std::span<const NamedTensor> params) {
    for (const auto& p : params) {
        const ContainerEntry* e = container.find(p.name);
        if (e == nullptr) fail(ErrorKind::compatibility, "checkpoint has no tensor '" + p.name + "'");
        if (e->tensor.shape() != p.tensor.shape()) {
            fail(ErrorKind::compatibility, "tensor '" + p.name + "' has shape " + shape_to_string(e->tensor.shape()) +
                                               " in the checkpoint but " + shape_to_string(p.tensor.shape()) +
                                               " in the model");
        }
        Tensor dst = p.tensor;
        const auto src = e->tensor.data();
        std::copy(src.begin(), src.end(), dst.mutable_data().begin());
    }
}

LoadedModel load_omni_checkpoint(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) fail(ErrorKind::io, "no checkpoint at '" + path.string() + "'");
    LoadedModel out;
    out.container = read_container(path);
    out.meta = decode_meta(out.container.metadata);
    if (out.meta.kind != "omni") {
        fail(ErrorKind::compatibility, "'" + path.string() + "' is a " + out.meta.kind + " checkpoint, not omni");
    }
    out.model = std::make_unique<OmniModel>(out.meta.config.model_config(), init_seed(out.meta.config));
    restore_tensors(out.container, out.model->all_parameters());
    freeze_base(out.model->backbone);
    if (out.model->backbone.weights_hash() != out.meta.base_hash) {
        fail(ErrorKind::compatibility, "base weights in '" + path.string() + "' do not match the recorded hash");
    }
    return out;
}

// ---------------------------------------------------------------------------

DirectoryLock::DirectoryLock(const std::filesystem::path& dir) {
    const auto path = dir / ".lock";
    fd_ = ::open(path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
    if (fd_ < 0) fail(ErrorKind::io, "cannot open lock file '" + path.string() + "'");
    if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
        ::close(fd_);
        fd_ = -1;
        fail(ErrorKind::io, "'" + dir.string() + "' is locked by another training run");
    }
}

DirectoryLock::~DirectoryLock() {
    if (fd_ >= 0) {
        ::flock(fd_, LOCK_UN);
        ::close(fd_);
    }
}

Corpus cmd_gen_data(const RunConfig& config, const std::filesystem::path& out_dir, bool force) {
    config.validate();
    if (std::filesystem::exists(out_dir / kCorpusFile) && !force) {
        fail(ErrorKind::io, "'" + (out_dir / kCorpusFile).string() + "' exists; pass --force to overwrite");
    }
    Corpus corpus = generate_corpus(config.corpus_config());
    write_corpus(out_dir, corpus);
    return corpus;
}

// ---------------------------------------------------------------------------

namespace {

struct TextExample {
    std::vector<TokenId> ids;
    std::vector<std::uint8_t> scored;  // scored[p]: ids[p + 1] contributes to the loss
    std::size_t offset = 0;
};

// bos, characters, eos; every next token scored.
TextExample lm_example(const SyntheticUtterance& utt) {
    TextExample ex;
    ex.ids.push_back(Vocabulary::kBos);
    ex.ids.insert(ex.ids.end(), utt.target.ids.begin(), utt.target.ids.end());
    ex.scored.assign(ex.ids.size(), 1);
    ex.scored.back() = 0;
    return ex;
}

// Each character of the transcript repeated 1..max_repeat times, once per
// source stream of the task, then the task prompt and the clean transcript.
// Per source, either every character draws its own count or one count
// holds for the whole stream. Source letters may be swapped for random
// letters first. Only the clean continuation is scored.
TextExample copy_example(const SyntheticUtterance& utt, TaskKind task, const PretrainConfig& config, Rng& rng) {
    TextExample ex;
    const auto& vocab = Vocabulary::standard();
    const TokenId first_letter = *vocab.char_token('a');
    const std::size_t sources = task == TaskKind::avsr ? 2 : 1;
    const auto& chars = utt.target.ids;
    for (std::size_t s = 0; s < sources; ++s) {
        std::size_t fixed = 0;
        if (config.constant_repeat_prob > 0.0 && uniform01(rng) < config.constant_repeat_prob) {
            fixed = 1 + uniform_index(rng, config.max_repeat);
        }
        for (std::size_t i = 0; i + 1 < chars.size(); ++i) {
            TokenId c = chars[i];
            if (config.substitute_prob > 0.0 && c != *vocab.char_token(' ') && uniform01(rng) < config.substitute_prob) {
                c = static_cast<TokenId>(first_letter + uniform_index(rng, 26));
            }
            const std::size_t r = fixed > 0 ? fixed : 1 + uniform_index(rng, config.max_repeat);
            ex.ids.insert(ex.ids.end(), r, c);
        }
    }
    const auto prompt = task_prompt_ids(task);
    ex.ids.insert(ex.ids.end(), prompt.begin(), prompt.end());
    const std::size_t first_target = ex.ids.size();
    ex.ids.insert(ex.ids.end(), chars.begin(), chars.end());
    ex.scored.assign(ex.ids.size(), 0);
    for (std::size_t p = first_target - 1; p + 1 < ex.ids.size(); ++p) ex.scored[p] = 1;
    return ex;
}

Tensor text_loss(const Backbone& backbone, const TextExample& ex) {
    const std::size_t n = ex.ids.size();
    std::vector<TokenId> targets(n, Vocabulary::kPad);
    for (std::size_t p = 0; p + 1 < n; ++p) targets[p] = ex.ids[p + 1];
    const Tensor logits = backbone.forward(backbone.embed_tokens(ex.ids), TaskKind::asr, nullptr, ex.offset);
    return softmax_cross_entropy(logits, targets, ex.scored);
}

std::size_t scored_count(const TextExample& ex) {
    return static_cast<std::size_t>(std::count(ex.scored.begin(), ex.scored.end(), 1));
}

double perplexity(const Backbone& backbone, const std::vector<const SyntheticUtterance*>& utts) {
    NoGradGuard no_grad;
    double nll = 0.0;
    std::size_t tokens = 0;
    for (const auto* u : utts) {
        const auto ex = lm_example(*u);
        nll += text_loss(backbone, ex).item();
        tokens += scored_count(ex);
    }
    return std::exp(nll / static_cast<double>(tokens));
}

}  // namespace

PretrainSummary cmd_pretrain(const RunConfig& config, const std::filesystem::path& data_dir,
                             const std::filesystem::path& out_dir, bool force, const ProgressFn& progress) {
    config.validate();
    const Corpus corpus = read_corpus(data_dir);
    check_corpus(corpus, config);
    ensure_directory(out_dir);
    const auto ckpt = out_dir / kBaseCheckpointFile;
    if (std::filesystem::exists(ckpt) && !force) {
        fail(ErrorKind::io, "'" + ckpt.string() + "' exists; pass --force to overwrite");
    }
    DirectoryLock lock(out_dir);

    Rng init_rng(derive_seed(init_seed(config), "init.base"));
    Backbone backbone(config.backbone, init_rng);
    AdamW optimizer(backbone.parameters(), config.pretrain.optim);
    Rng rng(derive_seed(config.seed, "pretrain"));
    const auto train = corpus.split(Split::train);
    auto valid = corpus.split(Split::valid);
    if (train.empty()) fail(ErrorKind::validation, "pretraining needs a nonempty train split");
    if (valid.empty()) valid = train;
    if (valid.size() > 200) valid.resize(200);

    auto log = open_log(out_dir / "pretrain.jsonl", false);
    auto record_ppl = [&](std::size_t step) {
        const double ppl = perplexity(backbone, valid);
        nlohmann::ordered_json j{{"type", "perplexity"}, {"step", step}, {"value", ppl}};
        log << j.dump() << '\n';
        if (progress) progress("pretrain step " + std::to_string(step) + " valid perplexity " + std::to_string(ppl));
        return ppl;
    };

    PretrainSummary summary;
    summary.initial_perplexity = record_ppl(0);
    const std::size_t total = config.pretrain.optim.total_steps;
    const std::size_t max_len = config.backbone.max_len;
    for (std::size_t step = 0; step < total; ++step) {
        Tensor loss;
        std::size_t used = 0;
        for (std::size_t b = 0; b < config.pretrain.batch_size; ++b) {
            const SyntheticUtterance& utt = *train[uniform_index(rng, train.size())];
            TextExample ex;
            if (uniform01(rng) < config.pretrain.copy_fraction) {
                ex = copy_example(utt, kAllTasks[uniform_index(rng, kTaskCount)], config.pretrain, rng);
            } else {
                ex = lm_example(utt);
                if (ex.ids.size() > max_len) fail(ErrorKind::length, "transcript longer than max_len");
                ex.offset = uniform_index(rng, max_len - ex.ids.size() + 1);
            }
            if (ex.ids.size() + ex.offset > max_len) continue;
            Tensor l = text_loss(backbone, ex);
            loss = loss.defined() ? add(loss, l) : l;
            ++used;
        }
        if (used == 0) fail(ErrorKind::length, "no pretraining example fits in max_len");
        loss = scale(loss, 1.0 / static_cast<double>(used));
        const double lr = cosine_lr(config.pretrain.optim, step);
        optimizer.zero_grad();
        backward(loss);
        optimizer.step(lr);
        nlohmann::ordered_json j{{"type", "pretrain"}, {"step", step}, {"loss", loss.item()}, {"lr", lr}};
        log << j.dump() << '\n';
        const bool last = step + 1 == total;
        if (!last && config.pretrain.eval_every > 0 && (step + 1) % config.pretrain.eval_every == 0) {
            record_ppl(step + 1);
        }
    }
    summary.final_perplexity = record_ppl(total);
    freeze_base(backbone);

    CheckpointMeta meta;
    meta.kind = "base";
    meta.step = total;
    meta.base_hash = backbone.weights_hash();
    meta.config = config;
    meta.extra["initial_perplexity"] = std::to_string(summary.initial_perplexity);
    meta.extra["final_perplexity"] = std::to_string(summary.final_perplexity);
    save_base_checkpoint(ckpt, backbone, meta);
    summary.base_hash = meta.base_hash;
    return summary;
}

// ---------------------------------------------------------------------------

namespace {

class BatchOrder {
public:
    BatchOrder(std::vector<const SyntheticUtterance*> pool, std::uint64_t seed, std::size_t batch_size)
        : pool_(std::move(pool)), seed_(seed), batch_size_(batch_size) {}

    std::vector<const SyntheticUtterance*> batch(std::size_t step) {
        std::vector<const SyntheticUtterance*> out;
        for (std::size_t i = 0; i < batch_size_; ++i) {
            const std::size_t k = step * batch_size_ + i;
            const std::size_t epoch = k / pool_.size();
            if (epoch != epoch_ || order_.empty()) shuffle_for(epoch);
            out.push_back(pool_[order_[k % pool_.size()]]);
        }
        return out;
    }

private:
    void shuffle_for(std::size_t epoch) {
        epoch_ = epoch;
        order_.resize(pool_.size());
        std::iota(order_.begin(), order_.end(), std::size_t{0});
        Rng rng(derive_seed(seed_, epoch));
        for (std::size_t i = order_.size(); i > 1; --i) std::swap(order_[i - 1], order_[uniform_index(rng, i)]);
    }

    std::vector<const SyntheticUtterance*> pool_;
    std::uint64_t seed_;
    std::size_t batch_size_;
    std::size_t epoch_ = 0;
    std::vector<std::size_t> order_;
};

std::vector<EvalCell> extreme_cells(const RateMenu& menu) {
    const auto a_lo = menu.audio_rates.front(), a_hi = menu.audio_rates.back();
    const auto v_lo = menu.video_rates.front(), v_hi = menu.video_rates.back();
    std::vector<EvalCell> cells{{TaskKind::asr, a_lo, std::nullopt}, {TaskKind::vsr, std::nullopt, v_lo},
                                {TaskKind::avsr, a_lo, v_lo}};
    if (a_hi != a_lo || v_hi != v_lo) {
        cells.push_back({TaskKind::asr, a_hi, std::nullopt});
        cells.push_back({TaskKind::vsr, std::nullopt, v_hi});
        cells.push_back({TaskKind::avsr, a_hi, v_hi});
    }
    return cells;
}

}  // namespace

TrainSummary cmd_train(const RunConfig& config, const std::filesystem::path& data_dir,
                       const std::filesystem::path& base_path, const std::filesystem::path& out_dir,
                       const TrainOptions& options, const ProgressFn& progress) {
    config.validate();
    const Corpus corpus = read_corpus(data_dir);
    check_corpus(corpus, config);
    if (!std::filesystem::exists(base_path)) fail(ErrorKind::io, "no base checkpoint at '" + base_path.string() + "'");
    const Container base = read_container(base_path);
    const CheckpointMeta base_meta = decode_meta(base.metadata);
    if (base_meta.kind != "base") fail(ErrorKind::compatibility, "'" + base_path.string() + "' is not a base checkpoint");
    check_backbone_compatible(base_meta.config.backbone, config.backbone);

    ensure_directory(out_dir);
    DirectoryLock lock(out_dir);
    const auto ckpt = out_dir / kOmniCheckpointFile;
    const bool have_ckpt = std::filesystem::exists(ckpt);
    if (options.resume && !have_ckpt) fail(ErrorKind::io, "nothing to resume in '" + out_dir.string() + "'");
    if (!options.resume && have_ckpt && !options.force) {
        fail(ErrorKind::io, "'" + ckpt.string() + "' exists; pass --force to overwrite or --resume to continue");
    }

    std::unique_ptr<OmniModel> model;
    TrainState state{0, Rng(derive_seed(config.seed, "rates"))};
    LoadedModel loaded;
    if (options.resume) {
        loaded = load_omni_checkpoint(ckpt);
        if (!(loaded.meta.config == config)) {
            fail(ErrorKind::compatibility, "resume config differs from the config the checkpoint was trained with");
        }
        if (loaded.meta.base_hash != base_meta.base_hash) {
            fail(ErrorKind::compatibility, "checkpoint was trained on a different base");
        }
        model = std::move(loaded.model);
        state.step = loaded.meta.step;
        set_rng_state(state.rate_rng, loaded.meta.extra.at("rate_rng"));
    } else {
        model = std::make_unique<OmniModel>(config.model_config(), init_seed(config));
        restore_tensors(base, model->backbone.parameters());
    }
    freeze_base(model->backbone);
    const std::uint64_t base_hash = model->backbone.weights_hash();
    if (base_hash != base_meta.base_hash) fail(ErrorKind::compatibility, "base weights do not match their recorded hash");

    AdamW optimizer(model->trainable_parameters(), config.train.optim);
    if (options.resume) {
        std::vector<NamedTensor> moments;
        for (const auto& e : loaded.container.entries) {
            if (e.name.rfind("optim.", 0) == 0) moments.push_back({e.name, e.tensor});
        }
        optimizer.import_state(moments, std::stoull(loaded.meta.extra.at("adam_step")));
    }

    const auto train = corpus.split(Split::train);
    if (train.empty()) fail(ErrorKind::validation, "training needs a nonempty train split");
    BatchOrder order(train, derive_seed(config.seed, "order"), config.train.batch_size);
    auto log = open_log(out_dir / kMetricsFile, options.resume);

    TrainStepInputs in;
    in.menu = &config.rates;
    in.weights = config.loss;
    in.augment = config.augment;
    in.noise_pool = &corpus;

    auto validate = [&](std::size_t step) {
        EvalOptions eo;
        eo.beam_width = 1;
        eo.temperature = config.decode.temperature;
        eo.max_new_tokens = config.decode.max_new_tokens;
        eo.max_utts = config.train.valid_utts;
        nlohmann::ordered_json j{{"type", "validation"}, {"step", step}};
        std::string line = "validation step " + std::to_string(step) + ":";
        for (const auto& cell : extreme_cells(config.rates)) {
            const EvalRow row = evaluate(*model, corpus, Split::valid, cell, config.rates, eo);
            if (row.counts.reference_words == 0) continue;
            nlohmann::ordered_json c{{"task", task_name(cell.task)}};
            c["audio_rate"] = cell.audio_rate ? nlohmann::json(cell.audio_rate->value()) : nlohmann::json(nullptr);
            c["video_rate"] = cell.video_rate ? nlohmann::json(cell.video_rate->value()) : nlohmann::json(nullptr);
            c["wer"] = row.counts.wer();
            j["cells"].push_back(c);
            std::ostringstream os;
            os << " " << task_name(cell.task) << "(" << (cell.audio_rate ? std::to_string(cell.audio_rate->value()) : "-")
               << "," << (cell.video_rate ? std::to_string(cell.video_rate->value()) : "-") << ")=" << row.counts.wer();
            line += os.str();
        }
        log << j.dump() << '\n';
        log.flush();
        if (progress) progress(line);
    };

    TrainSummary summary;
    summary.first_step = state.step;
    summary.base_hash = base_hash;
    const std::size_t total = config.train.optim.total_steps;
    const std::size_t stop = options.stop_after > 0 ? std::min(options.stop_after, total) : total;
    while (state.step < stop) {
        const auto batch = order.batch(state.step);
        in.batch = batch;
        in.noise_seed = derive_seed(derive_seed(config.seed, "noise"), state.step);
        const StepMetrics m = train_step(*model, in, optimizer, state.rate_rng, state.step);
        log << m.to_json() << '\n';
        summary.steps.push_back(m);
        ++state.step;
        if (progress && (state.step % 25 == 0 || state.step == stop)) {
            std::ostringstream os;
            os << "step " << state.step << "/" << total << " loss " << m.total_loss << " (asr " << m.task_loss[0]
               << ", vsr " << m.task_loss[1] << ", avsr " << m.task_loss[2] << ") rates " << m.audio_rate << "/"
               << m.video_rate;
            progress(os.str());
        }
        if (config.train.validate_every > 0 && state.step % config.train.validate_every == 0 && state.step < total) {
            validate(state.step);
        }
        if (config.train.checkpoint_every > 0 && state.step % config.train.checkpoint_every == 0 && state.step < stop) {
            save_omni_checkpoint(ckpt, *model, config, &optimizer, state);
        }
    }
    if (state.step == total && summary.first_step < total) validate(total);
    save_omni_checkpoint(ckpt, *model, config, &optimizer, state);
    if (model->backbone.weights_hash() != base_hash) fail(ErrorKind::consistency, "frozen base changed during training");
    summary.final_step = state.step;
    return summary;
}

// ---------------------------------------------------------------------------

EvalResult cmd_eval(const std::filesystem::path& checkpoint, const std::filesystem::path& data_dir,
                    const EvalRequest& request, const ProgressFn& progress) {
    EvalResult result;
    if (!std::filesystem::exists(checkpoint)) fail(ErrorKind::io, "no checkpoint at '" + checkpoint.string() + "'");
    result.checkpoint_hash_before = hash_file(checkpoint);
    const LoadedModel loaded = load_omni_checkpoint(checkpoint);
    const Corpus corpus = read_corpus(data_dir);
    check_corpus(corpus, loaded.meta.config);
    const std::uint64_t weights_before = hash_tensors(loaded.model->all_parameters());
    for (const auto& cell : request.cells) {
        result.rows.push_back(evaluate(*loaded.model, corpus, request.split, cell, loaded.meta.config.rates,
                                       request.options));
        if (progress) {
            std::ostringstream os;
            write_report_row(os, result.rows.back());
            std::string line = os.str();
            if (!line.empty() && line.back() == '\n') line.pop_back();
            progress(line);
        }
    }
    if (hash_tensors(loaded.model->all_parameters()) != weights_before) {
        fail(ErrorKind::consistency, "model weights changed during evaluation");
    }
    result.checkpoint_hash_after = hash_file(checkpoint);
    return result;
}

std::string format_report(const std::vector<EvalRow>& rows) {
    std::ostringstream os;
    write_report_header(os);
    for (const auto& r : rows) write_report_row(os, r);
    return os.str();
}

std::vector<CostReport> cmd_cost(std::uint64_t tasks, std::uint64_t audio_rates, std::uint64_t video_rates) {
    std::vector<CostReport> out;
    for (auto m : kAllMethods) out.push_back(count_cost(m, tasks, audio_rates, video_rates));
    return out;
}

std::string format_cost_table(const std::vector<CostReport>& rows) {
    std::ostringstream os;
    os << "method\ttrained_models\tllm_passes_per_batch\n";
    for (const auto& r : rows) os << method_name(r.method) << '\t' << r.trained_models << '\t' << r.llm_passes_per_batch << '\n';
    return os.str();
}

}  // namespace omni
