#include "omni/decode.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include "omni/error.hpp"

namespace omni {

void DecodeConfig::validate() const {
    if (beam_width == 0) fail(ErrorKind::validation, "beam_width must be >= 1");
    if (!(temperature > 0.0) || !std::isfinite(temperature)) {
        fail(ErrorKind::validation, "temperature must be positive");
    }
    if (max_new_tokens == 0) fail(ErrorKind::validation, "max_new_tokens must be >= 1");
}

double Hypothesis::score() const {
    return tokens.empty() ? 0.0 : log_prob / static_cast<double>(tokens.size());
}

namespace {

std::vector<double> tempered_log_softmax(std::span<const double> logits, double temperature) {
    std::vector<double> out(logits.size());
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = logits[i] / temperature;
        mx = std::max(mx, out[i]);
    }
    double z = 0.0;
    for (double x : out) z += std::exp(x - mx);
    const double log_z = mx + std::log(z);
    for (auto& x : out) x -= log_z;
    return out;
}

struct Beam {
    Hypothesis hyp;
    KvCache cache;
    std::vector<double> logits;
};

struct Candidate {
    std::size_t parent;
    TokenId token;
    double log_prob;
    std::size_t length;

    double score() const { return log_prob / static_cast<double>(length); }
};

bool candidate_before(const Candidate& a, const Candidate& b) {
    const double sa = a.score(), sb = b.score();
    if (sa != sb) return sa > sb;
    if (a.token != b.token) return a.token < b.token;
    if (a.length != b.length) return a.length < b.length;
    return a.parent < b.parent;
}

bool hypothesis_before(const Hypothesis& a, const Hypothesis& b) {
    const double sa = a.score(), sb = b.score();
    if (sa != sb) return sa > sb;
    if (a.tokens != b.tokens) {
        const auto n = std::min(a.tokens.size(), b.tokens.size());
        for (std::size_t i = 0; i < n; ++i) {
            if (a.tokens[i] != b.tokens[i]) return a.tokens[i] < b.tokens[i];
        }
    }
    return a.tokens.size() < b.tokens.size();
}

}  // namespace

Hypothesis beam_search(const Backbone& backbone, const OmniLora* lora, const Tensor& prefix, TaskKind task,
                       const DecodeConfig& config) {
    config.validate();
    NoGradGuard no_grad;
    const TokenId eos = Vocabulary::kEos;
    std::vector<Beam> live(1);
    live[0].logits = backbone.prefill(prefix, task, lora, live[0].cache);
    std::vector<Hypothesis> finished;

    for (std::size_t n = 0; n < config.max_new_tokens && !live.empty(); ++n) {
        std::vector<Candidate> candidates;
        for (std::size_t b = 0; b < live.size(); ++b) {
            const auto lp = tempered_log_softmax(live[b].logits, config.temperature);
            for (std::size_t v = 0; v < lp.size(); ++v) {
                const double total = live[b].hyp.log_prob + lp[v];
                if (!std::isfinite(total)) continue;
                candidates.push_back({b, static_cast<TokenId>(v), total, n + 1});
            }
        }
        if (candidates.empty()) fail(ErrorKind::decode, "every beam hypothesis was pruned");
        const std::size_t keep = std::min(config.beam_width, candidates.size());
        std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep),
                          candidates.end(), candidate_before);

        const bool last_step = n + 1 == config.max_new_tokens;
        std::vector<Beam> next;
        for (std::size_t i = 0; i < keep; ++i) {
            const Candidate& c = candidates[i];
            Hypothesis h = live[c.parent].hyp;
            h.tokens.push_back(c.token);
            h.log_prob = c.log_prob;
            if (c.token == eos) {
                h.finished = true;
                finished.push_back(std::move(h));
                continue;
            }
            if (last_step) {
                finished.push_back(std::move(h));
                continue;
            }
            Beam beam{std::move(h), live[c.parent].cache, {}};
            beam.logits = backbone.extend(c.token, task, lora, beam.cache);
            next.push_back(std::move(beam));
        }
        live = std::move(next);
        if (finished.size() >= config.beam_width) break;
    }
    for (auto& b : live) finished.push_back(std::move(b.hyp));
    if (finished.empty()) fail(ErrorKind::decode, "beam search produced no hypothesis");
    return *std::min_element(finished.begin(), finished.end(), hypothesis_before);
}

Hypothesis greedy_decode(const Backbone& backbone, const OmniLora* lora, const Tensor& prefix, TaskKind task,
                         std::size_t max_new_tokens, double temperature) {
    if (max_new_tokens == 0) fail(ErrorKind::validation, "max_new_tokens must be >= 1");
    NoGradGuard no_grad;
    KvCache cache;
    std::vector<double> logits = backbone.prefill(prefix, task, lora, cache);
    Hypothesis h;
    for (std::size_t n = 0; n < max_new_tokens; ++n) {
        const auto lp = tempered_log_softmax(logits, temperature);
        const auto best = static_cast<TokenId>(std::max_element(lp.begin(), lp.end()) - lp.begin());
        h.tokens.push_back(best);
        h.log_prob += lp[static_cast<std::size_t>(best)];
        if (best == Vocabulary::kEos) {
            h.finished = true;
            break;
        }
        if (n + 1 < max_new_tokens) logits = backbone.extend(best, task, lora, cache);
    }
    return h;
}

Tensor decode_prefix(const OmniModel& model, const SyntheticUtterance& utt, TaskKind task, RatePair rates,
                     const Tensor* audio_override) {
    NoGradGuard no_grad;
    Tensor za, zv;
    if (task != TaskKind::vsr) za = model.project_audio(audio_override ? *audio_override : utt.audio_raw, rates.audio);
    if (task != TaskKind::asr) zv = model.project_video(utt.video_raw, rates.video);
    const TaskSequence seq = assemble(task, za, zv, task_prompt_ids(task), TargetText{});
    return embed_sequence(model.backbone, seq, false);
}

std::string transcribe(const OmniModel& model, const SyntheticUtterance& utt, const DecodeConfig& config,
                       const Tensor* audio_override) {
    const Tensor prefix = decode_prefix(model, utt, config.task, {config.audio_rate, config.video_rate}, audio_override);
    const Hypothesis h = beam_search(model.backbone, &model.lora, prefix, config.task, config);
    return Vocabulary::standard().detokenize(h.tokens);
}

// ---------------------------------------------------------------------------

double WerBreakdown::wer() const {
    if (reference_words == 0) fail(ErrorKind::undefined_rate, "WER is undefined for an empty reference");
    return static_cast<double>(errors()) / static_cast<double>(reference_words);
}

WerBreakdown& WerBreakdown::operator+=(const WerBreakdown& other) {
    substitutions += other.substitutions;
    deletions += other.deletions;
    insertions += other.insertions;
    reference_words += other.reference_words;
    return *this;
}

std::vector<std::string> split_words(std::string_view text) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        std::size_t j = i;
        while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
        if (j > i) out.emplace_back(text.substr(i, j - i));
        i = j;
    }
    return out;
}

WerBreakdown word_alignment(std::span<const std::string> ref, std::span<const std::string> hyp) {
    if (ref.empty()) fail(ErrorKind::undefined_rate, "WER is undefined for an empty reference");
    const std::size_t n = ref.size(), m = hyp.size();
    std::vector<std::size_t> d((n + 1) * (m + 1));
    auto at = [&](std::size_t i, std::size_t j) -> std::size_t& { return d[i * (m + 1) + j]; };
    for (std::size_t i = 0; i <= n; ++i) at(i, 0) = i;
    for (std::size_t j = 0; j <= m; ++j) at(0, j) = j;
    for (std::size_t i = 1; i <= n; ++i) {
        for (std::size_t j = 1; j <= m; ++j) {
            const std::size_t diag = at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
            at(i, j) = std::min({diag, at(i, j - 1) + 1, at(i - 1, j) + 1});
        }
    }
    WerBreakdown out;
    out.reference_words = n;
    std::size_t i = n, j = m;
    while (i > 0 || j > 0) {
        if (i > 0 && j > 0) {
            const bool same = ref[i - 1] == hyp[j - 1];
            if (at(i, j) == at(i - 1, j - 1) + (same ? 0 : 1)) {
                if (!same) ++out.substitutions;
                --i;
                --j;
                continue;
            }
        }
        if (j > 0 && at(i, j) == at(i, j - 1) + 1) {
            ++out.insertions;
            --j;
        } else {
            ++out.deletions;
            --i;
        }
    }
    return out;
}

WerBreakdown wer(std::string_view reference, std::string_view hypothesis) {
    const auto r = split_words(reference);
    const auto h = split_words(hypothesis);
    return word_alignment(r, h);
}

// ---------------------------------------------------------------------------

std::vector<EvalCell> sweep_cells(const RateMenu& menu, double snr_db) {
    menu.validate();
    std::vector<EvalCell> cells;
    for (auto a : menu.audio_rates) cells.push_back({TaskKind::asr, a, std::nullopt, snr_db});
    for (auto v : menu.video_rates) cells.push_back({TaskKind::vsr, std::nullopt, v, snr_db});
    for (auto a : menu.audio_rates) {
        for (auto v : menu.video_rates) cells.push_back({TaskKind::avsr, a, v, snr_db});
    }
    return cells;
}

EvalRow evaluate(const OmniModel& model, const Corpus& corpus, Split split, const EvalCell& cell,
                 const RateMenu& menu, const EvalOptions& options) {
    const bool uses_audio = cell.task != TaskKind::vsr;
    const bool uses_video = cell.task != TaskKind::asr;
    if (uses_audio && !cell.audio_rate) fail(ErrorKind::validation, "evaluation cell lacks an audio rate");
    if (uses_video && !cell.video_rate) fail(ErrorKind::validation, "evaluation cell lacks a video rate");
    DecodeConfig dc;
    dc.beam_width = options.beam_width;
    dc.temperature = options.temperature;
    dc.max_new_tokens = options.max_new_tokens;
    dc.task = cell.task;
    if (cell.audio_rate) dc.audio_rate = *cell.audio_rate;
    if (cell.video_rate) dc.video_rate = *cell.video_rate;
    dc.validate();

    EvalRow row;
    row.cell = cell;
    row.on_menu = (!uses_audio || menu.contains_audio(*cell.audio_rate)) &&
                  (!uses_video || menu.contains_video(*cell.video_rate));
    const bool noisy = uses_audio && !(std::isinf(cell.snr_db) && cell.snr_db > 0);
    const std::uint64_t snr_stream = derive_seed(options.noise_seed, std::bit_cast<std::uint64_t>(cell.snr_db));
    const auto utts = corpus.split(split);
    const std::size_t limit = options.max_utts == 0 ? utts.size() : std::min(options.max_utts, utts.size());
    for (std::size_t i = 0; i < limit; ++i) {
        const SyntheticUtterance& utt = *utts[i];
        std::string hyp;
        if (noisy) {
            Rng rng(derive_seed(snr_stream, utt.id));
            const Tensor audio = add_noise(utt.audio_raw, cell.snr_db, corpus, utt.id, rng);
            hyp = transcribe(model, utt, dc, &audio);
        } else {
            hyp = transcribe(model, utt, dc);
        }
        row.counts += wer(utt.text, hyp);
        ++row.n_utts;
    }
    return row;
}

std::string format_snr(double snr_db) {
    if (std::isinf(snr_db)) return snr_db > 0 ? "inf" : "-inf";
    std::ostringstream os;
    os << snr_db;
    return os.str();
}

void write_report_header(std::ostream& out) {
    out << "task\taudio_rate\tvideo_rate\tsnr\twer\tsub\tdel\tins\tn_words\tn_utts\tmenu\n";
}

void write_report_row(std::ostream& out, const EvalRow& row) {
    auto rate = [](const std::optional<CompressionRate>& r) {
        return r ? std::to_string(r->value()) : std::string("-");
    };
    std::ostringstream wer_text;
    wer_text << std::fixed << std::setprecision(6) << (row.counts.reference_words ? row.counts.wer() : 0.0);
    out << task_name(row.cell.task) << '\t' << rate(row.cell.audio_rate) << '\t' << rate(row.cell.video_rate) << '\t'
        << format_snr(row.cell.snr_db) << '\t' << wer_text.str() << '\t' << row.counts.substitutions << '\t'
        << row.counts.deletions << '\t' << row.counts.insertions << '\t' << row.counts.reference_words << '\t'
        << row.n_utts << '\t' << (row.on_menu ? "on-menu" : "off-menu") << '\n';
}

}  // namespace omni
