// Runs every acceptance criterion and prints one PASS/FAIL line per criterion.
// The trained-model criteria (4, 5, 6) run the full pipeline at the default
// configuration, so this takes a while.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "../gradient_cases.hpp"
#include "../support.hpp"
#include "omni/error.hpp"
#include "omni/pipeline.hpp"

using namespace omni;
using namespace omni::test;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, x);
    return buf;
}

std::string pct(double wer) { return fmt("%.2f", 100.0 * wer); }

// Small model shared by the algebraic checks.
ModelConfig small_model(LoraVariant variant) {
    ModelConfig m;
    m.backbone.d_model = 16;
    m.backbone.n_layers = 2;
    m.backbone.n_heads = 2;
    m.backbone.d_ff = 24;
    m.lora = {variant, 4, 1.0};
    m.frontend = {16, 8, 16};
    return m;
}

CorpusConfig small_corpus(std::size_t n, std::uint64_t seed) {
    CorpusConfig c;
    c.n_utts = n;
    c.max_words = 2;
    c.video_frames_per_char = 2;
    c.seed = seed;
    return c;
}

void randomize_ups(OmniLora& lora, Rng& rng, double sd) {
    for (auto& p : lora.parameters()) {
        if (p.name.ends_with(".up")) {
            for (auto& x : const_cast<Tensor&>(p.tensor).mutable_data()) x = sd * normal(rng);
        }
    }
}

double chi2_sf_3(double x) {
    return std::erfc(std::sqrt(x / 2.0)) + std::sqrt(2.0 * x / M_PI) * std::exp(-x / 2.0);
}

// ---------------------------------------------------------------------------
// Trained runs shared by criteria 1, 4, 5, 6 and 10
// ---------------------------------------------------------------------------

struct SeedRun {
    std::uint64_t seed = 0;
    std::filesystem::path data, run;
    TrainSummary train;
    double train_seconds = 0;  // pretraining included
    std::map<std::string, EvalRow> rows;  // keyed by cell label
    std::uint64_t hash = 0;   // checkpoint hash before the first evaluation
    bool hash_stable = true;  // every evaluation saw that hash before and after
};

std::string cell_label(const EvalCell& c) {
    std::ostringstream os;
    os << task_name(c.task) << '(' << (c.audio_rate ? std::to_string(c.audio_rate->value()) : "-") << ','
       << (c.video_rate ? std::to_string(c.video_rate->value()) : "-") << ")@" << format_snr(c.snr_db);
    return os.str();
}

class Harness {
public:
    Harness(std::filesystem::path work, std::vector<std::uint64_t> seeds) : work_(std::move(work)), seeds_(std::move(seeds)) {}

    RunConfig config_for(std::uint64_t seed) const {
        RunConfig c = default_run_config();
        c.seed = seed;
        return c;
    }

    // Every seed pretrains its own base on its own corpus text.
    const std::filesystem::path& base(std::uint64_t seed) {
        auto it = bases_.find(seed);
        if (it == bases_.end()) {
            const auto data = data_dir(seed);
            const auto dir = work_ / ("base-" + std::to_string(seed));
            const auto t0 = Clock::now();
            std::cerr << "pretraining base for seed " << seed << "\n";
            const auto s = cmd_pretrain(config_for(seed), data, dir, true, progress());
            pretrain_seconds_[seed] = seconds_since(t0);
            std::cerr << "pretrain: perplexity " << s.initial_perplexity << " -> " << s.final_perplexity << " in "
                      << pretrain_seconds_[seed] << " s\n";
            it = bases_.emplace(seed, dir / std::string(kBaseCheckpointFile)).first;
        }
        return it->second;
    }

    std::filesystem::path data_dir(std::uint64_t seed) {
        const auto dir = work_ / ("data-" + std::to_string(seed));
        if (!generated_.contains(seed)) {
            cmd_gen_data(config_for(seed), dir, true);
            generated_.insert(seed);
        }
        return dir;
    }

    SeedRun& run(std::uint64_t seed) {
        auto it = runs_.find(seed);
        if (it != runs_.end()) return it->second;
        SeedRun r;
        r.seed = seed;
        r.data = data_dir(seed);
        r.run = work_ / ("run-" + std::to_string(seed));
        const auto& b = base(seed);
        TrainOptions opt;
        opt.force = true;
        std::cerr << "training seed " << seed << "\n";
        const auto t0 = Clock::now();
        r.train = cmd_train(config_for(seed), r.data, b, r.run, opt, progress());
        r.train_seconds = seconds_since(t0) + pretrain_seconds_.at(seed);
        std::cerr << "seed " << seed << ": trained in " << r.train_seconds << " s with pretraining\n";
        return runs_.emplace(seed, std::move(r)).first->second;
    }

    // Evaluates the cells not yet evaluated for this seed on the test split.
    void evaluate(SeedRun& r, const std::vector<EvalCell>& cells) {
        EvalRequest req;
        for (const auto& c : cells) {
            if (!r.rows.contains(cell_label(c))) req.cells.push_back(c);
        }
        if (req.cells.empty()) return;
        const RunConfig c = config_for(r.seed);
        req.split = Split::test;
        req.options.beam_width = c.decode.beam_width;
        req.options.temperature = c.decode.temperature;
        req.options.max_new_tokens = c.decode.max_new_tokens;
        const auto t0 = Clock::now();
        const EvalResult res = cmd_eval(r.run / std::string(kOmniCheckpointFile), r.data, req);
        std::cerr << "seed " << r.seed << ": " << req.cells.size() << " cells in " << seconds_since(t0) << " s\n";
        if (r.hash == 0) r.hash = res.checkpoint_hash_before;
        r.hash_stable &= res.checkpoint_hash_before == r.hash && res.checkpoint_hash_after == r.hash;
        for (const auto& row : res.rows) {
            std::cerr << "  " << cell_label(row.cell) << " WER " << pct(row.counts.wer()) << "%\n";
            r.rows.emplace(cell_label(row.cell), row);
        }
    }

    double wer(SeedRun& r, const EvalCell& cell) {
        evaluate(r, {cell});
        return r.rows.at(cell_label(cell)).counts.wer();
    }

    const std::vector<std::uint64_t>& seeds() const { return seeds_; }
    const std::filesystem::path& work() const { return work_; }

private:
    ProgressFn progress() const {
        return [](const std::string& line) {
            if (line.find("valid") != std::string::npos) std::cerr << "  " << line << "\n";
        };
    }

    std::filesystem::path work_;
    std::vector<std::uint64_t> seeds_;
    std::map<std::uint64_t, std::filesystem::path> bases_;
    std::map<std::uint64_t, double> pretrain_seconds_;
    std::set<std::uint64_t> generated_;
    std::map<std::uint64_t, SeedRun> runs_;
};

const EvalCell kAsr42{TaskKind::asr, CompressionRate(4), std::nullopt};
const EvalCell kVsr42{TaskKind::vsr, std::nullopt, CompressionRate(2)};
const EvalCell kAvsr42{TaskKind::avsr, CompressionRate(4), CompressionRate(2)};

EvalCell at_snr(EvalCell c, double snr) {
    c.snr_db = snr;
    return c;
}

// ---------------------------------------------------------------------------
// Criteria
// ---------------------------------------------------------------------------

Verdict criterion_1(Harness& h) {
    const auto rows = cmd_cost(3, 2, 2);
    const std::map<Method, std::pair<std::uint64_t, std::uint64_t>> want{{Method::llama_avsr, {8, 8}},
                                                                        {Method::llama_mtsk, {3, 8}},
                                                                        {Method::llama_mt, {4, 12}},
                                                                        {Method::omni, {1, 3}}};
    bool table_ok = rows.size() == 4;
    std::ostringstream d;
    for (const auto& r : rows) {
        table_ok &= want.at(r.method) == std::pair{r.trained_models, r.llm_passes_per_batch};
        d << method_name(r.method) << ' ' << r.trained_models << '/' << r.llm_passes_per_batch << "; ";
    }
    const SeedRun& run = h.run(h.seeds().front());
    const std::size_t total = h.config_for(run.seed).train.optim.total_steps;
    bool passes_ok = run.train.steps.size() == total;
    for (const auto& s : run.train.steps) passes_ok &= s.passes == 3;
    d << "passes=3 on " << run.train.steps.size() << "/" << total << " steps";
    return {table_ok && passes_ok, d.str()};
}

Verdict criterion_2() {
    const auto results = run_gradient_suite(20, 2024, 1e-5);
    double worst = 0;
    std::string worst_op;
    bool ok = !results.empty();
    for (const auto& r : results) {
        ok &= r.instances >= 20 && r.worst <= 1e-4;
        if (r.worst >= worst) {
            worst = r.worst;
            worst_op = r.op;
        }
    }
    return {ok, std::to_string(results.size()) + " ops x 20 instances, worst rel " + fmt("%.2e", worst) + " (" +
                    worst_op + ")"};
}

Verdict criterion_3() {
    Rng rng(303);
    const ModelConfig mc = small_model(LoraVariant::shared_task);
    Backbone bb(mc.backbone, rng);
    freeze_base(bb);
    bool a = true, b = true, c = true, d = true;
    // (a) zero up-projections
    for (auto v : {LoraVariant::shared, LoraVariant::task, LoraVariant::shared_task}) {
        OmniLora lora({v, 4, 1.0}, mc.backbone, rng);
        for (int trial = 0; trial < 5; ++trial) {
            Tensor x = random_tensor(rng, {draw(rng, 1, 12), 16}, 0.3);
            for (auto t : kAllTasks) a &= bitwise_equal(bb.forward(x, t, nullptr).data(), bb.forward(x, t, &lora).data());
        }
    }
    // (b) ST with zeroed task groups against S holding the same shared adapters
    {
        OmniLora st({LoraVariant::shared_task, 4, 1.0}, mc.backbone, rng);
        OmniLora s({LoraVariant::shared, 4, 1.0}, mc.backbone, rng);
        randomize_ups(st, rng, 0.2);
        for (auto& p : st.parameters()) {
            if (!p.name.starts_with("lora.shared.")) {
                for (auto& x : const_cast<Tensor&>(p.tensor).mutable_data()) x = 0.0;
            }
        }
        for (std::size_t site = 0; site < st.site_count(); ++site) {
            AdapterSite as{site / 2, site % 2 == 0 ? Projection::query : Projection::value};
            auto& src = st.shared_at(as);
            auto& dst = s.shared_at(as);
            std::copy(src.down.data().begin(), src.down.data().end(), dst.down.mutable_data().begin());
            std::copy(src.up.data().begin(), src.up.data().end(), dst.up.mutable_data().begin());
        }
        for (int trial = 0; trial < 5; ++trial) {
            Tensor x = random_tensor(rng, {draw(rng, 1, 12), 16}, 0.3);
            for (auto t : kAllTasks) b &= bitwise_equal(bb.forward(x, t, &st).data(), bb.forward(x, t, &s).data());
        }
    }
    // (c) cross-task gradients are exactly zero
    for (auto v : {LoraVariant::task, LoraVariant::shared_task}) {
        for (auto task : kAllTasks) {
            OmniLora lora({v, 4, 1.0}, mc.backbone, rng);
            randomize_ups(lora, rng, 0.2);
            const std::size_t s = draw(rng, 2, 10);
            Tensor x = random_tensor(rng, {s, 16}, 0.3);
            const auto targets = random_ids(rng, s, mc.backbone.vocab_size);
            std::vector<std::uint8_t> mask(s, 1);
            backward(softmax_cross_entropy(bb.forward(x, task, &lora), targets, mask));
            const std::string own = "lora." + std::string(group_name(group_of(task))) + ".";
            for (const auto& p : lora.parameters()) {
                if (p.name.starts_with(own) || p.name.starts_with("lora.shared.")) continue;
                if (p.tensor.has_grad()) {
                    c &= std::all_of(p.tensor.grad().begin(), p.tensor.grad().end(), [](double g) { return g == 0.0; });
                }
            }
        }
    }
    // (d) counts from tensors
    std::map<LoraVariant, std::size_t> counts;
    for (auto v : {LoraVariant::shared, LoraVariant::task, LoraVariant::shared_task}) {
        const ModelConfig full = default_run_config().model_config();
        OmniLora lora({v, full.lora.rank, full.lora.alpha}, full.backbone, rng);
        for (const auto& p : lora.parameters()) counts[v] += p.tensor.size();
    }
    const std::size_t s1 = counts[LoraVariant::shared];
    d = counts[LoraVariant::task] == 3 * s1 && counts[LoraVariant::shared_task] == 4 * s1 && s1 > 0;
    std::ostringstream os;
    os << "(a) " << (a ? "ok" : "FAIL") << " (b) " << (b ? "ok" : "FAIL") << " (c) " << (c ? "ok" : "FAIL")
       << " (d) S:T:ST = " << s1 << ':' << counts[LoraVariant::task] << ':' << counts[LoraVariant::shared_task];
    return {a && b && c && d, os.str()};
}

Verdict criterion_4(Harness& h) {
    SeedRun& r = h.run(h.seeds().front());
    const RunConfig c = h.config_for(r.seed);
    const auto cells = sweep_cells(c.rates);
    h.evaluate(r, cells);
    bool ok = cells.size() == 8 && r.hash_stable && r.hash != 0;
    double worst = 0;
    for (const auto& cell : cells) {
        const double w = r.rows.at(cell_label(cell)).counts.wer();
        worst = std::max(worst, w);
        ok &= w < 0.60;
    }
    const double a4 = h.wer(r, {TaskKind::asr, CompressionRate(4), std::nullopt});
    const double a16 = h.wer(r, {TaskKind::asr, CompressionRate(16), std::nullopt});
    ok &= a4 < a16;
    ok &= r.train_seconds <= 30 * 60;
    std::ostringstream os;
    os << "8 cells, worst WER " << pct(worst) << "%, ASR(4) " << pct(a4) << "% vs ASR(16) " << pct(a16)
       << "%, hash " << (r.hash_stable ? "unchanged" : "CHANGED") << ", train "
       << fmt("%.0f", r.train_seconds) << " s";
    return {ok, os.str()};
}

Verdict criterion_5(Harness& h) {
    bool ok = true;
    std::ostringstream os;
    for (auto seed : h.seeds()) {
        SeedRun& r = h.run(seed);
        h.evaluate(r, {kAsr42, kVsr42, kAvsr42});
        const double a = h.wer(r, kAsr42), v = h.wer(r, kVsr42), av = h.wer(r, kAvsr42);
        ok &= v > a && av <= a + 0.01 && v - a >= 0.05;
        os << "seed " << seed << ": ASR " << pct(a) << " VSR " << pct(v) << " AVSR " << pct(av) << "; ";
    }
    return {ok, os.str()};
}

Verdict criterion_6(Harness& h) {
    bool ok = true;
    std::ostringstream os;
    const std::vector<double> snrs{5.0, 0.0, -5.0};
    for (auto seed : h.seeds()) {
        SeedRun& r = h.run(seed);
        std::vector<EvalCell> cells{kAsr42, kAvsr42};
        for (double s : snrs) {
            cells.push_back(at_snr(kAsr42, s));
            cells.push_back(at_snr(kAvsr42, s));
        }
        h.evaluate(r, cells);
        os << "seed " << seed << ":";
        for (double s : snrs) {
            const double a = h.wer(r, at_snr(kAsr42, s)), av = h.wer(r, at_snr(kAvsr42, s));
            ok &= av <= a;
            os << ' ' << format_snr(s) << "dB " << pct(av) << "/" << pct(a);
        }
        const double d_asr = h.wer(r, at_snr(kAsr42, -5.0)) - h.wer(r, kAsr42);
        const double d_avsr = h.wer(r, at_snr(kAvsr42, -5.0)) - h.wer(r, kAvsr42);
        ok &= d_avsr < d_asr;
        os << ", drop AVSR " << pct(d_avsr) << " < ASR " << pct(d_asr) << "; ";
    }
    return {ok, "AVSR/ASR WER% " + os.str()};
}

Verdict criterion_7() {
    Rng rng(707);
    const Corpus corpus = generate_corpus(small_corpus(12, 77));
    OmniModel model(small_model(LoraVariant::shared_task), 7);
    randomize_ups(model.lora, rng, 0.1);
    double worst_loss = 0, worst_grad = 0;
    const std::array<LossWeights, 3> hots{LossWeights{1, 0, 0}, LossWeights{0, 1, 0}, LossWeights{0, 0, 1}};
    const LossWeights w;
    const auto params = model.lora.parameters();
    auto grads_of = [&](const std::function<Tensor()>& loss) {
        for (auto& p : params) const_cast<Tensor&>(p.tensor).zero_grad();
        backward(loss());
        std::vector<double> g;
        for (const auto& p : params) {
            if (p.tensor.has_grad()) {
                g.insert(g.end(), p.tensor.grad().begin(), p.tensor.grad().end());
            } else {
                g.insert(g.end(), p.tensor.size(), 0.0);
            }
        }
        return g;
    };
    const RateMenu menu = default_rate_menu();
    for (std::size_t u = 0; u < 5; ++u) {
        const RatePair rates = sample_rates(rng, menu);
        const auto& utt = corpus.utterances[u];
        const TaskTriple triple = build_triple(model, utt, rates);
        for (auto t : kAllTasks) {
            const double standalone = sequence_loss(model.backbone, &model.lora, triple[t]).item();
            const double via = omni_loss(model.backbone, &model.lora, triple, hots[task_index(t)]).total.item();
            worst_loss = std::max(worst_loss, std::abs(standalone - via));
        }
        auto total = grads_of([&] { return omni_loss(model.backbone, &model.lora, build_triple(model, utt, rates), w).total; });
        std::vector<double> expect(total.size(), 0.0);
        for (auto t : kAllTasks) {
            const auto g = grads_of([&] { return sequence_loss(model.backbone, &model.lora, build_triple(model, utt, rates)[t]); });
            for (std::size_t i = 0; i < g.size(); ++i) expect[i] += w[t] * g[i];
        }
        for (std::size_t i = 0; i < total.size(); ++i) worst_grad = std::max(worst_grad, std::abs(total[i] - expect[i]));
    }
    return {worst_loss <= 1e-12 && worst_grad <= 1e-10,
            "5 utterances, loss diff " + fmt("%.1e", worst_loss) + ", grad diff " + fmt("%.1e", worst_grad)};
}

Verdict criterion_8() {
    const RateMenu menu = default_rate_menu();
    Rng rng(derive_seed(1, "rates"));
    std::map<std::pair<std::size_t, std::size_t>, double> counts;
    std::vector<RatePair> seq;
    for (int i = 0; i < 10000; ++i) {
        seq.push_back(sample_rates(rng, menu));
        ++counts[{seq.back().audio.value(), seq.back().video.value()}];
    }
    double chi2 = 0;
    for (const auto& [k, n] : counts) chi2 += (n - 2500.0) * (n - 2500.0) / 2500.0;
    const double p = counts.size() == 4 ? chi2_sf_3(chi2) : 0.0;
    Rng again(derive_seed(1, "rates"));
    bool same = true;
    for (const auto& r : seq) same &= sample_rates(again, menu) == r;
    return {p > 0.01 && same, "chi2 " + fmt("%.3f", chi2) + ", p " + fmt("%.3f", p) + ", replay " + (same ? "identical" : "DIFFERS")};
}

std::size_t brute_edits(std::span<const std::string> r, std::span<const std::string> hyp) {
    if (r.empty()) return hyp.size();
    if (hyp.empty()) return r.size();
    return std::min({brute_edits(r.subspan(1), hyp.subspan(1)) + (r[0] == hyp[0] ? 0 : 1),
                     brute_edits(r.subspan(1), hyp) + 1, brute_edits(r, hyp.subspan(1)) + 1});
}

Verdict criterion_9() {
    // beam 1 against greedy
    const Corpus corpus = generate_corpus(small_corpus(50, 99));
    OmniModel model(small_model(LoraVariant::shared_task), 9);
    Rng rng(909);
    randomize_ups(model.lora, rng, 0.3);
    std::size_t same = 0;
    for (std::size_t i = 0; i < corpus.utterances.size(); ++i) {
        const TaskKind task = kAllTasks[i % 3];
        const Tensor prefix = decode_prefix(model, corpus.utterances[i], task, {CompressionRate(4), CompressionRate(2)});
        DecodeConfig dc;
        dc.beam_width = 1;
        dc.max_new_tokens = 12;
        dc.task = task;
        const Hypothesis b = beam_search(model.backbone, &model.lora, prefix, task, dc);
        const Hypothesis g = greedy_decode(model.backbone, &model.lora, prefix, task, 12, dc.temperature);
        same += b.tokens == g.tokens;
    }
    // WER against exhaustive alignment
    std::vector<std::vector<std::string>> seqs{{}}, frontier{{}};
    for (int len = 1; len <= 5; ++len) {
        std::vector<std::vector<std::string>> next;
        for (const auto& s : frontier) {
            for (const char* w : {"a", "b", "c"}) {
                next.push_back(s);
                next.back().push_back(w);
            }
        }
        seqs.insert(seqs.end(), next.begin(), next.end());
        frontier = std::move(next);
    }
    std::size_t pairs = 0, wer_ok = 0;
    for (const auto& r : seqs) {
        if (r.empty()) continue;
        for (const auto& hyp : seqs) {
            ++pairs;
            wer_ok += word_alignment(r, hyp).errors() == brute_edits(r, hyp);
        }
    }
    // compress against window means
    std::size_t combos = 0, comp_ok = 0;
    for (std::size_t L = 1; L <= 12; ++L) {
        for (std::size_t r = 1; r <= 6; ++r) {
            ++combos;
            TokenStream s{Modality::video, random_tensor(rng, {L, 3}), 25.0};
            const TokenStream c = compress(s, CompressionRate(r));
            bool ok = c.length() == (L + r - 1) / r;
            for (std::size_t j = 0; ok && j < c.length(); ++j) {
                const std::size_t lo = j * r, hi = std::min(L, lo + r);
                for (std::size_t col = 0; col < 3; ++col) {
                    double m = 0;
                    for (std::size_t i = lo; i < hi; ++i) m += s.frames.at(i, col);
                    m /= static_cast<double>(hi - lo);
                    ok &= std::abs(c.frames.at(j, col) - m) <= 1e-14 * std::max(1.0, std::abs(m));
                }
            }
            comp_ok += ok;
        }
    }
    std::ostringstream os;
    os << "beam1==greedy " << same << "/50, WER " << wer_ok << "/" << pairs << " pairs, compress " << comp_ok << "/"
       << combos;
    return {same == 50 && wer_ok == pairs && pairs == 363 * 364 && comp_ok == combos, os.str()};
}

Verdict criterion_10(Harness& h) {
    const std::uint64_t seed = h.seeds().front();
    const auto data = h.data_dir(seed);
    const auto dir = h.work() / "roundtrip";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    // corpus: read back, write again, same bytes
    const Corpus corpus = read_corpus(data);
    write_corpus(dir / "data", corpus);
    bool corpus_ok = true;
    for (auto name : {"corpus.omni", "train.tsv", "valid.tsv", "test.tsv"}) {
        corpus_ok &= hash_file(data / name) == hash_file(dir / "data" / name);
    }
    // checkpoint: train a few steps, reload, save again, same bytes and same logits
    const RunConfig cfg = h.config_for(seed);
    const std::size_t cut = 20;
    TrainOptions first;
    first.force = true;
    first.stop_after = cut;
    cmd_train(cfg, data, h.base(seed), dir / "split", first);
    const auto ckpt = dir / "split" / std::string(kOmniCheckpointFile);
    const LoadedModel a = load_omni_checkpoint(ckpt);
    const Container ca = read_container(ckpt);
    save_omni_checkpoint(dir / "weights.omni", *a.model, a.meta.config, nullptr, {a.meta.step, Rng(1)});
    const LoadedModel b = load_omni_checkpoint(dir / "weights.omni");
    bool ckpt_ok = hash_tensors(a.model->all_parameters()) == hash_tensors(b.model->all_parameters());
    for (const auto& e : read_container(dir / "weights.omni").entries) {
        const auto it = std::find_if(ca.entries.begin(), ca.entries.end(), [&](const auto& x) { return x.name == e.name; });
        ckpt_ok &= it != ca.entries.end() && bitwise_equal(it->tensor.data(), e.tensor.data());
    }
    ckpt_ok &= encode_container(read_container(ckpt)) == encode_container(ca);
    for (auto t : kAllTasks) {
        const RatePair r{CompressionRate(4), CompressionRate(2)};
        const auto& u = corpus.utterances.front();
        ckpt_ok &= bitwise_equal(a.model->backbone.forward(decode_prefix(*a.model, u, t, r), t, &a.model->lora).data(),
                                 b.model->backbone.forward(decode_prefix(*b.model, u, t, r), t, &b.model->lora).data());
    }
    // resume against an uninterrupted run
    TrainOptions rest;
    rest.resume = true;
    rest.stop_after = cut + 1;
    const TrainSummary resumed = cmd_train(cfg, data, h.base(seed), dir / "split", rest);
    TrainOptions straight;
    straight.force = true;
    straight.stop_after = cut + 1;
    const TrainSummary whole = cmd_train(cfg, data, h.base(seed), dir / "straight", straight);
    double diff = INFINITY;
    if (!resumed.steps.empty() && whole.steps.size() == cut + 1) {
        diff = std::abs(resumed.steps.front().total_loss - whole.steps.back().total_loss);
        if (resumed.steps.front().step != whole.steps.back().step) diff = INFINITY;
    }
    std::ostringstream os;
    os << "corpus " << (corpus_ok ? "bitwise" : "DIFFERS") << ", checkpoint " << (ckpt_ok ? "bitwise" : "DIFFERS")
       << ", resumed step " << cut + 1 << " loss diff " << fmt("%.1e", diff);
    return {corpus_ok && ckpt_ok && diff <= 1e-9, os.str()};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"acceptance checks"};
    std::string work = "acceptance-work";
    std::vector<int> only;
    std::vector<std::uint64_t> seeds{1, 2, 3};
    app.add_option("--work", work, "scratch directory for corpora, base and runs");
    app.add_option("--only", only, "run just these criteria");
    app.add_option("--seeds", seeds, "seeds for the trained-model criteria")->expected(1, 10);
    CLI11_PARSE(app, argc, argv);
    set_warnings_silenced(true);
    std::filesystem::create_directories(work);

    Harness h(work, seeds);
    const std::vector<std::pair<int, std::function<Verdict()>>> criteria{
        {2, [] { return criterion_2(); }},
        {3, [] { return criterion_3(); }},
        {7, [] { return criterion_7(); }},
        {8, [] { return criterion_8(); }},
        {9, [] { return criterion_9(); }},
        {1, [&] { return criterion_1(h); }},
        {4, [&] { return criterion_4(h); }},
        {5, [&] { return criterion_5(h); }},
        {6, [&] { return criterion_6(h); }},
        {10, [&] { return criterion_10(h); }},
    };
    std::map<int, Verdict> verdicts;
    for (const auto& [id, fn] : criteria) {
        if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
        const auto t0 = Clock::now();
        Verdict v;
        try {
            v = fn();
        } catch (const std::exception& e) {
            v = {false, std::string("error: ") + e.what()};
        }
        std::cerr << "criterion " << id << " done in " << fmt("%.1f", seconds_since(t0)) << " s\n";
        verdicts[id] = v;
    }
    bool all = true;
    for (const auto& [id, v] : verdicts) {
        std::cout << (v.pass ? "PASS" : "FAIL") << " criterion " << id << ": " << v.detail << std::endl;
        all &= v.pass;
    }
    return all ? 0 : 1;
}
