#include <doctest.h>

#include <cmath>
#include <map>

#include "omni/data.hpp"
#include "omni/error.hpp"
#include "omni/task_engine.hpp"
#include "support.hpp"

using namespace omni;
using namespace omni::test;

namespace {

ModelConfig tiny_model(LoraVariant variant = LoraVariant::shared_task) {
    ModelConfig m;
    m.backbone.d_model = 16;
    m.backbone.n_layers = 1;
    m.backbone.n_heads = 2;
    m.backbone.d_ff = 24;
    m.lora = {variant, 4, 1.0};
    m.frontend = {16, 8, 16};
    return m;
}

CorpusConfig tiny_corpus(std::size_t n = 12) {
    CorpusConfig c;
    c.n_utts = n;
    c.max_words = 1;
    c.video_frames_per_char = 2;
    c.seed = 5;
    return c;
}

void randomize_ups(OmniModel& model, Rng& rng) {
    for (auto& p : model.lora.parameters()) {
        if (p.name.ends_with(".up")) {
            for (auto& x : const_cast<Tensor&>(p.tensor).mutable_data()) x = 0.1 * normal(rng);
        }
    }
}

// Upper tail of the chi-square distribution with 3 degrees of freedom.
double chi2_sf_3(double x) {
    return std::erfc(std::sqrt(x / 2.0)) + std::sqrt(2.0 * x / M_PI) * std::exp(-x / 2.0);
}

}  // namespace

TEST_CASE("sequences are laid out audio, video, prompt, target") {
    Tensor za = Tensor::zeros({5, 16}), zv = Tensor::zeros({3, 16});
    TargetText target{{10, 11, 2}};
    for (auto t : kAllTasks) {
        const auto prompt = task_prompt_ids(t);
        TaskSequence s = assemble(t, za, zv, prompt, target);
        std::vector<SegmentKind> kinds;
        for (const auto& span : s.segment_map) kinds.push_back(span.kind);
        std::vector<SegmentKind> expect;
        if (t != TaskKind::vsr) expect.push_back(SegmentKind::audio);
        if (t != TaskKind::asr) expect.push_back(SegmentKind::video);
        expect.push_back(SegmentKind::prompt);
        expect.push_back(SegmentKind::target);
        CHECK(kinds == expect);
        const std::size_t media = (t != TaskKind::vsr ? 5 : 0) + (t != TaskKind::asr ? 3 : 0);
        CHECK(s.length() == media + prompt.size() + 3);
        CHECK(s.prefix_length() == media + prompt.size());
        for (std::size_t p = 0; p < s.length(); ++p) CHECK((s.loss_mask[p] != 0) == (p >= s.prefix_length()));
    }
}

TEST_CASE("a missing modality is an assembly error") {
    TargetText target{{10, 2}};
    auto kind_of = [&](TaskKind t, const Tensor& a, const Tensor& v) {
        try {
            assemble(t, a, v, task_prompt_ids(t), target);
        } catch (const Error& e) {
            return e.kind();
        }
        return ErrorKind::contract;
    };
    CHECK(kind_of(TaskKind::asr, Tensor(), Tensor::zeros({2, 16})) == ErrorKind::assembly);
    CHECK(kind_of(TaskKind::vsr, Tensor::zeros({2, 16}), Tensor()) == ErrorKind::assembly);
    CHECK(kind_of(TaskKind::avsr, Tensor::zeros({2, 16}), Tensor()) == ErrorKind::assembly);
}

TEST_CASE("the three prompts differ and name their modality") {
    const auto& vocab = Vocabulary::standard();
    CHECK(vocab.detokenize(task_prompt_ids(TaskKind::asr)).find("speech") != std::string::npos);
    CHECK(task_prompt_ids(TaskKind::asr) != task_prompt_ids(TaskKind::vsr));
    CHECK(task_prompt_ids(TaskKind::avsr).size() > task_prompt_ids(TaskKind::asr).size());
}

TEST_CASE("shifted targets put token p on row p-1") {
    Tensor za = Tensor::zeros({2, 16});
    TargetText target{{12, 13, 2}};
    TaskSequence s = assemble(TaskKind::asr, za, Tensor(), task_prompt_ids(TaskKind::asr), target);
    const auto sh = shift_targets(s);
    const std::size_t b = s.prefix_length();
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(sh.targets[b - 1 + i] == target.ids[i]);
        CHECK(sh.mask[b - 1 + i] == 1);
    }
    std::size_t scored = 0;
    for (auto m : sh.mask) scored += m;
    CHECK(scored == 3);
}

TEST_CASE("one-hot weights reproduce each standalone loss") {
    const Corpus corpus = generate_corpus(tiny_corpus());
    OmniModel model(tiny_model(), 3);
    Rng rng(31);
    randomize_ups(model, rng);
    const auto& utt = corpus.utterances[0];
    const TaskTriple triple = build_triple(model, utt, {CompressionRate(4), CompressionRate(2)});
    const std::array<LossWeights, 3> hots{LossWeights{1, 0, 0}, LossWeights{0, 1, 0}, LossWeights{0, 0, 1}};
    for (auto t : kAllTasks) {
        const double standalone = sequence_loss(model.backbone, &model.lora, triple[t]).item();
        const double via_total = omni_loss(model.backbone, &model.lora, triple, hots[task_index(t)]).total.item();
        CHECK(std::abs(standalone - via_total) <= 1e-12);
    }
}

TEST_CASE("the weighted loss gradient is the weighted sum of task gradients") {
    const Corpus corpus = generate_corpus(tiny_corpus());
    OmniModel model(tiny_model(), 4);
    Rng rng(32);
    randomize_ups(model, rng);
    const auto& utt = corpus.utterances[1];
    const LossWeights w;  // 1, 1.5, 1
    const auto params = model.lora.parameters();
    auto grads_of = [&](auto&& loss_fn) {
        for (auto& p : params) const_cast<Tensor&>(p.tensor).zero_grad();
        const TaskTriple triple = build_triple(model, utt, {CompressionRate(16), CompressionRate(5)});
        backward(loss_fn(triple));
        std::vector<std::vector<double>> g;
        for (const auto& p : params) {
            g.emplace_back(p.tensor.size(), 0.0);
            if (p.tensor.has_grad()) std::copy(p.tensor.grad().begin(), p.tensor.grad().end(), g.back().begin());
        }
        return g;
    };
    const auto total = grads_of([&](const TaskTriple& tr) { return omni_loss(model.backbone, &model.lora, tr, w).total; });
    std::array<std::vector<std::vector<double>>, 3> per;
    for (auto t : kAllTasks) {
        per[task_index(t)] = grads_of([&](const TaskTriple& tr) { return sequence_loss(model.backbone, &model.lora, tr[t]); });
    }
    double worst = 0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        for (std::size_t j = 0; j < total[i].size(); ++j) {
            const double expect = w.asr * per[0][i][j] + w.vsr * per[1][i][j] + w.avsr * per[2][i][j];
            worst = std::max(worst, std::abs(total[i][j] - expect));
        }
    }
    CHECK(worst <= 1e-10);
}

TEST_CASE("default loss weights are 1, 1.5, 1 and invalid weights are rejected") {
    LossWeights w;
    CHECK(w[TaskKind::asr] == 1.0);
    CHECK(w[TaskKind::vsr] == 1.5);
    CHECK(w[TaskKind::avsr] == 1.0);
    CHECK_THROWS_AS((LossWeights{-1, 1, 1}.validate()), Error);
    CHECK_THROWS_AS((LossWeights{0, 0, 0}.validate()), Error);
    CHECK_THROWS_AS((LossWeights{NAN, 1, 1}.validate()), Error);
}

TEST_CASE("a triple built from two utterances is a consistency error") {
    const Corpus corpus = generate_corpus(tiny_corpus());
    OmniModel model(tiny_model(), 5);
    const RatePair r{CompressionRate(4), CompressionRate(2)};
    TaskTriple a = build_triple(model, corpus.utterances[0], r);
    const TaskTriple b = build_triple(model, corpus.utterances[1], r);
    a.vsr = b.vsr;
    try {
        check_triple(a);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::consistency);
    }
}

TEST_CASE("rate draws are uniform over the menu and reproducible") {
    const RateMenu menu = default_rate_menu();
    Rng rng(derive_seed(1, "rates"));
    std::map<std::pair<std::size_t, std::size_t>, std::size_t> counts;
    std::vector<std::size_t> seq;
    for (int i = 0; i < 10000; ++i) {
        auto p = sample_rates(rng, menu);
        ++counts[{p.audio.value(), p.video.value()}];
        seq.push_back(p.audio.value() * 100 + p.video.value());
    }
    CHECK(counts.size() == 4);
    double chi2 = 0;
    for (const auto& [k, n] : counts) chi2 += (n - 2500.0) * (n - 2500.0) / 2500.0;
    CHECK(chi2_sf_3(chi2) > 0.01);
    Rng again(derive_seed(1, "rates"));
    for (std::size_t i = 0; i < seq.size(); ++i) {
        auto p = sample_rates(again, menu);
        CHECK(p.audio.value() * 100 + p.video.value() == seq[i]);
    }
}

TEST_CASE("chi-square tail helper matches tabulated quantiles") {
    // 11.345 is the 0.01 critical value and 7.815 the 0.05 value for 3 dof.
    CHECK(chi2_sf_3(11.345) == doctest::Approx(0.01).epsilon(1e-3));
    CHECK(chi2_sf_3(7.815) == doctest::Approx(0.05).epsilon(1e-3));
}

TEST_CASE("cost counts follow the per-method formulas") {
    auto row = [](Method m, std::uint64_t t, std::uint64_t a, std::uint64_t v) {
        const auto c = count_cost(m, t, a, v);
        return std::pair{c.trained_models, c.llm_passes_per_batch};
    };
    CHECK(row(Method::llama_avsr, 3, 2, 2) == std::pair<std::uint64_t, std::uint64_t>{8, 8});
    CHECK(row(Method::llama_mtsk, 3, 2, 2) == std::pair<std::uint64_t, std::uint64_t>{3, 8});
    CHECK(row(Method::llama_mt, 3, 2, 2) == std::pair<std::uint64_t, std::uint64_t>{4, 12});
    CHECK(row(Method::omni, 3, 2, 2) == std::pair<std::uint64_t, std::uint64_t>{1, 3});
    CHECK(row(Method::omni, 3, 1, 1) == std::pair<std::uint64_t, std::uint64_t>{1, 3});
    for (std::uint64_t a = 1; a <= 4; ++a) {
        for (std::uint64_t v = 1; v <= 4; ++v) {
            CHECK(row(Method::llama_avsr, 3, a, v).first == a + v + a * v);
            CHECK(row(Method::llama_mt, 3, a, v).second == 3 * a * v);
        }
    }
    CHECK_THROWS_AS(count_cost(Method::omni, 0, 2, 2), Error);
}

TEST_CASE("AdamW matches a scalar reference on a quadratic") {
    AdamWConfig cfg{1e-2, 1e-2, 0.9, 0.999, 1e-8, 0.1, 10};
    Tensor p({1}, {1.5}, true);
    AdamW opt({{"p", p}}, cfg);
    double ref = 1.5, m = 0, v = 0;
    for (int t = 1; t <= 25; ++t) {
        opt.zero_grad();
        backward(scale(mul(p, p), 0.5));  // gradient equals p
        const double g = ref;
        opt.step(cfg.lr_max);
        ref -= cfg.lr_max * cfg.weight_decay * ref;
        m = 0.9 * m + 0.1 * g;
        v = 0.999 * v + 0.001 * g * g;
        const double mhat = m / (1 - std::pow(0.9, t));
        const double vhat = v / (1 - std::pow(0.999, t));
        ref -= cfg.lr_max * mhat / (std::sqrt(vhat) + 1e-8);
        CHECK(p.data()[0] == doctest::Approx(ref).epsilon(1e-14));
    }
    CHECK(opt.step_count() == 25);
}

TEST_CASE("AdamW skips frozen parameters") {
    Tensor frozen({1}, {2.0}, false);
    Tensor live({1}, {2.0}, true);
    AdamW opt({{"f", frozen}, {"l", live}}, AdamWConfig{});
    backward(sum(mul(live, live)));
    opt.step(1e-2);
    CHECK(frozen.data()[0] == 2.0);
    CHECK(live.data()[0] < 2.0);
}

TEST_CASE("cosine schedule runs from lr_max to lr_min") {
    AdamWConfig cfg;
    cfg.lr_max = 1e-3;
    cfg.lr_min = 1e-5;
    cfg.total_steps = 100;
    CHECK(cosine_lr(cfg, 0) == doctest::Approx(1e-3));
    CHECK(cosine_lr(cfg, 100) == doctest::Approx(1e-5));
    CHECK(cosine_lr(cfg, 50) == doctest::Approx(0.5 * (1e-3 + 1e-5)));
    for (std::size_t s = 1; s <= 100; ++s) CHECK(cosine_lr(cfg, s) <= cosine_lr(cfg, s - 1));
}

TEST_CASE("a train step makes three backbone passes and leaves the base untouched") {
    const Corpus corpus = generate_corpus(tiny_corpus());
    OmniModel model(tiny_model(), 6);
    freeze_base(model.backbone);
    const auto base_before = model.backbone.weights_hash();
    const auto lora_before = hash_tensors(model.lora.parameters());
    AdamW opt(model.trainable_parameters(), AdamWConfig{});
    const RateMenu menu = default_rate_menu();
    Rng rates(7);
    const auto train = corpus.split(Split::train);
    for (std::size_t step = 0; step < 4; ++step) {
        TrainStepInputs in;
        std::vector<const SyntheticUtterance*> batch(train.begin() + static_cast<long>(step * 2),
                                                     train.begin() + static_cast<long>(step * 2 + 2));
        in.batch = batch;
        in.menu = &menu;
        const StepMetrics m = train_step(model, in, opt, rates, step);
        CHECK(m.passes == 3);
        CHECK(std::isfinite(m.total_loss));
        CHECK(m.total_loss == doctest::Approx(m.task_loss[0] + 1.5 * m.task_loss[1] + m.task_loss[2]));
        CHECK(m.to_json().find("\"passes\":3") != std::string::npos);
    }
    CHECK(model.backbone.weights_hash() == base_before);
    CHECK(hash_tensors(model.lora.parameters()) != lora_before);
}

TEST_CASE("model parameters split into frozen base and trainable rest") {
    OmniModel model(tiny_model(LoraVariant::shared), 8);
    freeze_base(model.backbone);
    std::size_t lora_n = 0;
    for (const auto& p : model.trainable_parameters()) {
        CHECK(p.tensor.requires_grad());
        if (p.name.starts_with("lora.")) lora_n += p.tensor.size();
    }
    CHECK(lora_n == trainable_parameter_count(LoraVariant::shared, model.config().backbone, 4));
    CHECK(model.all_parameters().size() == model.backbone.parameters().size() + model.trainable_parameters().size());
}
