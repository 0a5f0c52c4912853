#include "omni/config.hpp"

#include <charconv>
#include <cmath>
#include <functional>
#include <sstream>

#include "omni/container.hpp"
#include "omni/decode.hpp"
#include "omni/error.hpp"

namespace omni {

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::string format_double(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

double parse_double(const std::string& key, const std::string& text) {
    double v = 0;
    const auto r = std::from_chars(text.data(), text.data() + text.size(), v);
    if (r.ec != std::errc{} || r.ptr != text.data() + text.size()) {
        fail(ErrorKind::validation, key + ": '" + text + "' is not a number");
    }
    return v;
}

std::uint64_t parse_uint(const std::string& key, const std::string& text) {
    std::uint64_t v = 0;
    const auto r = std::from_chars(text.data(), text.data() + text.size(), v);
    if (r.ec != std::errc{} || r.ptr != text.data() + text.size()) {
        fail(ErrorKind::validation, key + ": '" + text + "' is not a nonnegative integer");
    }
    return v;
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream is(text);
    while (std::getline(is, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

struct Field {
    std::string section;
    std::string key;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;
};

template <typename Member>
Field size_field(std::string section, std::string key, Member member) {
    const std::string full = section + "." + key;
    return {section, key, [member](const RunConfig& c) { return std::to_string(member(const_cast<RunConfig&>(c))); },
            [member, full](RunConfig& c, const std::string& v) {
                member(c) = static_cast<std::remove_reference_t<decltype(member(c))>>(parse_uint(full, v));
            }};
}

template <typename Member>
Field double_field(std::string section, std::string key, Member member) {
    const std::string full = section + "." + key;
    return {section, key, [member](const RunConfig& c) { return format_double(member(const_cast<RunConfig&>(c))); },
            [member, full](RunConfig& c, const std::string& v) { member(c) = parse_double(full, v); }};
}

Field rates_field(std::string key, std::vector<CompressionRate> RateMenu::*list) {
    const std::string full = "rates." + key;
    return {"rates", key,
            [list](const RunConfig& c) {
                std::string out;
                for (const auto& r : c.rates.*list) out += (out.empty() ? "" : ", ") + std::to_string(r.value());
                return out;
            },
            [list, full](RunConfig& c, const std::string& v) {
                std::vector<CompressionRate> rates;
                for (const auto& item : split_list(v)) rates.emplace_back(parse_uint(full, item));
                c.rates.*list = std::move(rates);
            }};
}

const std::vector<Field>& fields() {
    static const std::vector<Field> table = [] {
        std::vector<Field> f;
        f.push_back(size_field("corpus", "n_utts", [](RunConfig& c) -> auto& { return c.corpus.n_utts; }));
        f.push_back(size_field("corpus", "min_words", [](RunConfig& c) -> auto& { return c.corpus.min_words; }));
        f.push_back(size_field("corpus", "max_words", [](RunConfig& c) -> auto& { return c.corpus.max_words; }));
        f.push_back(size_field("corpus", "video_frames_per_char",
                               [](RunConfig& c) -> auto& { return c.corpus.video_frames_per_char; }));
        f.push_back(size_field("corpus", "d_raw", [](RunConfig& c) -> auto& { return c.corpus.d_raw; }));
        f.push_back(double_field("corpus", "jitter", [](RunConfig& c) -> auto& { return c.corpus.jitter; }));
        f.push_back(
            double_field("corpus", "valid_fraction", [](RunConfig& c) -> auto& { return c.corpus.valid_fraction; }));
        f.push_back(
            double_field("corpus", "test_fraction", [](RunConfig& c) -> auto& { return c.corpus.test_fraction; }));

        f.push_back(size_field("backbone", "d_model", [](RunConfig& c) -> auto& { return c.backbone.d_model; }));
        f.push_back(size_field("backbone", "n_layers", [](RunConfig& c) -> auto& { return c.backbone.n_layers; }));
        f.push_back(size_field("backbone", "n_heads", [](RunConfig& c) -> auto& { return c.backbone.n_heads; }));
        f.push_back(size_field("backbone", "d_ff", [](RunConfig& c) -> auto& { return c.backbone.d_ff; }));
        f.push_back(size_field("backbone", "max_len", [](RunConfig& c) -> auto& { return c.backbone.max_len; }));

        f.push_back({"lora", "variant", [](const RunConfig& c) { return std::string(variant_tag(c.lora.variant)); },
                     [](RunConfig& c, const std::string& v) {
                         const auto parsed = parse_variant(v);
                         if (!parsed) fail(ErrorKind::validation, "lora.variant must be S, T or ST, got '" + v + "'");
                         c.lora.variant = *parsed;
                     }});
        f.push_back(size_field("lora", "rank", [](RunConfig& c) -> auto& { return c.lora.rank; }));
        f.push_back(double_field("lora", "alpha", [](RunConfig& c) -> auto& { return c.lora.alpha; }));

        f.push_back(size_field("frontend", "d_enc", [](RunConfig& c) -> auto& { return c.frontend.d_enc; }));
        f.push_back(size_field("frontend", "d_proj", [](RunConfig& c) -> auto& { return c.frontend.d_proj; }));

        f.push_back(rates_field("audio", &RateMenu::audio_rates));
        f.push_back(rates_field("video", &RateMenu::video_rates));

        f.push_back(double_field("loss", "asr", [](RunConfig& c) -> auto& { return c.loss.asr; }));
        f.push_back(double_field("loss", "vsr", [](RunConfig& c) -> auto& { return c.loss.vsr; }));
        f.push_back(double_field("loss", "avsr", [](RunConfig& c) -> auto& { return c.loss.avsr; }));

        auto optim = [&f](const std::string& section, auto pick) {
            f.push_back(double_field(section, "lr_max", [pick](RunConfig& c) -> auto& { return pick(c).lr_max; }));
            f.push_back(double_field(section, "lr_min", [pick](RunConfig& c) -> auto& { return pick(c).lr_min; }));
            f.push_back(double_field(section, "beta1", [pick](RunConfig& c) -> auto& { return pick(c).beta1; }));
            f.push_back(double_field(section, "beta2", [pick](RunConfig& c) -> auto& { return pick(c).beta2; }));
            f.push_back(double_field(section, "eps", [pick](RunConfig& c) -> auto& { return pick(c).eps; }));
            f.push_back(
                double_field(section, "weight_decay", [pick](RunConfig& c) -> auto& { return pick(c).weight_decay; }));
            f.push_back(size_field(section, "steps", [pick](RunConfig& c) -> auto& { return pick(c).total_steps; }));
        };
        optim("optim", [](RunConfig& c) -> AdamWConfig& { return c.train.optim; });
        f.push_back(size_field("optim", "batch_size", [](RunConfig& c) -> auto& { return c.train.batch_size; }));
        f.push_back(
            size_field("optim", "validate_every", [](RunConfig& c) -> auto& { return c.train.validate_every; }));
        f.push_back(size_field("optim", "valid_utts", [](RunConfig& c) -> auto& { return c.train.valid_utts; }));
        f.push_back(
            size_field("optim", "checkpoint_every", [](RunConfig& c) -> auto& { return c.train.checkpoint_every; }));

        optim("pretrain", [](RunConfig& c) -> AdamWConfig& { return c.pretrain.optim; });
        f.push_back(size_field("pretrain", "batch_size", [](RunConfig& c) -> auto& { return c.pretrain.batch_size; }));
        f.push_back(size_field("pretrain", "eval_every", [](RunConfig& c) -> auto& { return c.pretrain.eval_every; }));
        f.push_back(
            double_field("pretrain", "copy_fraction", [](RunConfig& c) -> auto& { return c.pretrain.copy_fraction; }));
        f.push_back(size_field("pretrain", "max_repeat", [](RunConfig& c) -> auto& { return c.pretrain.max_repeat; }));
        f.push_back(double_field("pretrain", "substitute_prob",
                                 [](RunConfig& c) -> auto& { return c.pretrain.substitute_prob; }));
        f.push_back(double_field("pretrain", "constant_repeat_prob",
                                 [](RunConfig& c) -> auto& { return c.pretrain.constant_repeat_prob; }));

        f.push_back(double_field("augment", "noise_prob", [](RunConfig& c) -> auto& { return c.augment.noise_prob; }));
        f.push_back(double_field("augment", "snr_min", [](RunConfig& c) -> auto& { return c.augment.snr_min; }));
        f.push_back(double_field("augment", "snr_max", [](RunConfig& c) -> auto& { return c.augment.snr_max; }));

        f.push_back(size_field("decode", "beam_width", [](RunConfig& c) -> auto& { return c.decode.beam_width; }));
        f.push_back(double_field("decode", "temperature", [](RunConfig& c) -> auto& { return c.decode.temperature; }));
        f.push_back(
            size_field("decode", "max_new_tokens", [](RunConfig& c) -> auto& { return c.decode.max_new_tokens; }));

        f.push_back({"eval", "snrs",
                     [](const RunConfig& c) {
                         std::string out;
                         for (double s : c.eval.snrs) out += (out.empty() ? "" : ", ") + format_double(s);
                         return out;
                     },
                     [](RunConfig& c, const std::string& v) {
                         c.eval.snrs.clear();
                         for (const auto& item : split_list(v)) c.eval.snrs.push_back(parse_double("eval.snrs", item));
                     }});
        f.push_back(size_field("eval", "max_utts", [](RunConfig& c) -> auto& { return c.eval.max_utts; }));

        f.push_back(size_field("run", "seed", [](RunConfig& c) -> auto& { return c.seed; }));
        return f;
    }();
    return table;
}

}  // namespace

void RunConfig::validate() const {
    corpus.validate();
    backbone.validate();
    if (corpus.d_raw != frontend.d_raw) fail(ErrorKind::validation, "frontend input width must equal corpus.d_raw");
    if (lora.rank == 0 || lora.rank >= backbone.d_model) {
        fail(ErrorKind::validation, "lora.rank must satisfy 1 <= rank < d_model");
    }
    if (!(lora.alpha > 0.0)) fail(ErrorKind::validation, "lora.alpha must be positive");
    if (frontend.d_enc == 0 || frontend.d_proj == 0) fail(ErrorKind::validation, "frontend widths must be >= 1");
    rates.validate();
    loss.validate();
    train.optim.validate();
    if (train.batch_size == 0) fail(ErrorKind::validation, "optim.batch_size must be >= 1");
    pretrain.optim.validate();
    if (pretrain.batch_size == 0) fail(ErrorKind::validation, "pretrain.batch_size must be >= 1");
    if (!(pretrain.copy_fraction >= 0.0 && pretrain.copy_fraction <= 1.0)) {
        fail(ErrorKind::validation, "pretrain.copy_fraction must be in [0, 1]");
    }
    if (!(pretrain.substitute_prob >= 0.0 && pretrain.substitute_prob <= 1.0)) {
        fail(ErrorKind::validation, "pretrain.substitute_prob must be in [0, 1]");
    }
    if (!(pretrain.constant_repeat_prob >= 0.0 && pretrain.constant_repeat_prob <= 1.0)) {
        fail(ErrorKind::validation, "pretrain.constant_repeat_prob must be in [0, 1]");
    }
    if (pretrain.max_repeat == 0) fail(ErrorKind::validation, "pretrain.max_repeat must be >= 1");
    augment.validate();
    DecodeConfig dc;
    dc.beam_width = decode.beam_width;
    dc.temperature = decode.temperature;
    dc.max_new_tokens = decode.max_new_tokens;
    dc.validate();
    for (double s : eval.snrs) {
        if (std::isnan(s)) fail(ErrorKind::validation, "eval.snrs must not contain NaN");
    }
}

ModelConfig RunConfig::model_config() const {
    ModelConfig m;
    m.backbone = backbone;
    m.lora = lora;
    m.frontend = frontend;
    m.frontend.d_raw = corpus.d_raw;
    return m;
}

CorpusConfig RunConfig::corpus_config() const {
    CorpusConfig c = corpus;
    c.seed = derive_seed(seed, "data");
    return c;
}

RunConfig default_run_config() {
    RunConfig c;
    c.backbone.vocab_size = Vocabulary::standard().size();
    c.frontend.d_raw = c.corpus.d_raw;
    return c;
}

RunConfig parse_run_config(std::string_view text) {
    RunConfig c = default_run_config();
    std::istringstream is{std::string(text)};
    std::string line, section;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const std::string t = trim(line);
        if (t.empty()) continue;
        const std::string where = "config line " + std::to_string(line_no);
        if (t.front() == '[') {
            if (t.back() != ']') fail(ErrorKind::validation, where + ": malformed section header");
            section = trim(std::string_view(t).substr(1, t.size() - 2));
            bool known = false;
            for (const auto& f : fields()) known = known || f.section == section;
            if (!known) fail(ErrorKind::validation, where + ": unknown section [" + section + "]");
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos) fail(ErrorKind::validation, where + ": expected key = value");
        if (section.empty()) fail(ErrorKind::validation, where + ": key outside any section");
        const std::string key = trim(std::string_view(t).substr(0, eq));
        const std::string value = trim(std::string_view(t).substr(eq + 1));
        const Field* field = nullptr;
        for (const auto& f : fields()) {
            if (f.section == section && f.key == key) field = &f;
        }
        if (field == nullptr) fail(ErrorKind::validation, where + ": unknown key '" + section + "." + key + "'");
        field->set(c, value);
    }
    c.frontend.d_raw = c.corpus.d_raw;
    c.validate();
    return c;
}

std::string serialize_run_config(const RunConfig& config) {
    std::string out, section;
    for (const auto& f : fields()) {
        if (f.section != section) {
            if (!section.empty()) out += '\n';
            section = f.section;
            out += "[" + section + "]\n";
        }
        out += f.key + " = " + f.get(config) + "\n";
    }
    return out;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) fail(ErrorKind::io, "config file '" + path.string() + "' not found");
    return parse_run_config(read_file(path));
}

}  // namespace omni
