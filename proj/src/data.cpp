#include "omni/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "omni/container.hpp"
#include "omni/error.hpp"

namespace omni {

namespace {

constexpr std::array<std::string_view, 6> kPromptWords{"Transcribe", "speech", "video", "and", "to", "text."};

constexpr std::string_view kLexicon[] = {
    "the", "of", "and", "to", "in", "is", "you", "that", "it", "he", "was", "for", "on", "are", "as", "with",
    "his", "they", "at", "be", "this", "have", "from", "or", "one", "had", "by", "word", "but", "not", "what",
    "all", "were", "we", "when", "your", "can", "said", "there", "use", "an", "each", "which", "she", "do",
    "how", "their", "if", "will", "up", "other", "about", "out", "many", "then", "them", "these", "so",
    "some", "her", "would", "make", "like", "him", "into", "time", "has", "look", "two", "more", "write",
    "go", "see", "number", "no", "way", "could", "people", "my", "than", "first", "water", "been", "call",
    "who", "oil", "its", "now", "find", "long", "down", "day", "did", "get", "come", "made", "may", "part",
    "over", "new", "sound", "take", "only", "little", "work", "know", "place", "year", "live", "me", "back",
    "give", "most", "very", "after", "thing", "our", "just", "name", "good", "sentence", "man", "think",
    "say", "great", "where", "help", "through", "much", "before", "line", "right", "too", "mean", "old",
    "any", "same", "tell", "boy", "follow", "came", "want", "show", "also", "around", "form", "three",
    "small", "set", "put", "end", "does", "another", "well", "large", "must", "big", "even", "such",
    "because", "turn", "here", "why", "ask", "went", "men", "read", "need", "land", "different", "home", "us",
    "move", "try", "kind", "hand", "picture", "again", "change", "off", "play", "spell", "air", "away",
    "animal", "house", "point", "page", "letter", "mother", "answer", "found", "study", "still", "learn",
    "should", "world", "high", "every", "near",
};
static_assert(std::size(kLexicon) == 200);

// Viseme classes: lips closed, lip-teeth, tongue-tip, sibilant, velar,
// rounded, open. Class 0 is reserved for the space.
constexpr std::array<std::string_view, 7> kVisemeGroups{"pbm", "fv", "tdnl", "szcxj", "kgqh", "wrouy", "aei"};

}  // namespace

std::span<const std::string_view> lexicon() { return kLexicon; }

// ---------------------------------------------------------------------------

Vocabulary::Vocabulary() {
    symbols_ = {"<pad>", "<bos>", "<eos>"};
    for (auto w : kPromptWords) symbols_.emplace_back(w);
    first_char_ = static_cast<TokenId>(symbols_.size());
    symbols_.emplace_back(" ");
    for (char c = 'a'; c <= 'z'; ++c) symbols_.emplace_back(1, c);
}

const Vocabulary& Vocabulary::standard() {
    static const Vocabulary vocab;
    return vocab;
}

std::optional<TokenId> Vocabulary::char_token(char c) const {
    if (c == ' ') return first_char_;
    if (c >= 'a' && c <= 'z') return static_cast<TokenId>(first_char_ + 1 + (c - 'a'));
    return std::nullopt;
}

bool Vocabulary::is_char_token(TokenId id) const {
    return id >= first_char_ && static_cast<std::size_t>(id) < symbols_.size();
}

bool Vocabulary::in_alphabet(std::string_view text) const {
    return std::all_of(text.begin(), text.end(), [&](char c) { return char_token(c).has_value(); });
}

TokenId Vocabulary::word_token(std::string_view word) const {
    for (std::size_t i = 0; i < kPromptWords.size(); ++i) {
        if (kPromptWords[i] == word) return static_cast<TokenId>(3 + i);
    }
    fail(ErrorKind::tokenization, "'" + std::string(word) + "' is not a prompt word");
}

TargetText Vocabulary::tokenize(std::string_view text) const {
    if (text.empty()) fail(ErrorKind::tokenization, "empty transcription (at least one symbol required)");
    TargetText out;
    out.ids.reserve(text.size() + 1);
    for (char c : text) {
        const auto id = char_token(c);
        if (!id) fail(ErrorKind::tokenization, std::string("character '") + c + "' is outside the alphabet");
        out.ids.push_back(*id);
    }
    out.ids.push_back(kEos);
    return out;
}

std::string Vocabulary::detokenize(std::span<const TokenId> ids) const {
    std::string out;
    bool last_was_word = false;
    for (TokenId id : ids) {
        if (id == kEos) break;
        if (id < 0 || static_cast<std::size_t>(id) >= symbols_.size()) {
            fail(ErrorKind::tokenization, "token id " + std::to_string(id) + " outside vocabulary");
        }
        if (id == kPad || id == kBos) continue;
        if (is_char_token(id)) {
            if (last_was_word) out += ' ';
            out += symbols_[static_cast<std::size_t>(id)];
            last_was_word = false;
        } else {
            if (!out.empty()) out += ' ';
            out += symbols_[static_cast<std::size_t>(id)];
            last_was_word = true;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------

VisemeMap::VisemeMap() {
    table_.fill(0xff);
    table_[static_cast<unsigned char>(' ')] = 0;
    for (std::size_t g = 0; g < kVisemeGroups.size(); ++g) {
        for (char c : kVisemeGroups[g]) table_[static_cast<unsigned char>(c)] = static_cast<std::uint8_t>(g + 1);
    }
    class_count_ = kVisemeGroups.size() + 1;
}

const VisemeMap& VisemeMap::standard() {
    static const VisemeMap map;
    return map;
}

std::size_t VisemeMap::class_of(char c) const {
    const auto u = static_cast<unsigned char>(c);
    if (u >= table_.size() || table_[u] == 0xff) {
        fail(ErrorKind::tokenization, std::string("no viseme for '") + c + "'");
    }
    return table_[u];
}

std::vector<char> VisemeMap::members(std::size_t viseme) const {
    std::vector<char> out;
    for (std::size_t u = 0; u < table_.size(); ++u) {
        if (table_[u] == viseme) out.push_back(static_cast<char>(u));
    }
    return out;
}

// ---------------------------------------------------------------------------

void CorpusConfig::validate() const {
    if (n_utts == 0) fail(ErrorKind::validation, "corpus.n_utts must be >= 1");
    if (min_words == 0 || max_words < min_words) {
        fail(ErrorKind::validation, "corpus word range must satisfy 1 <= min_words <= max_words");
    }
    if (video_frames_per_char == 0) fail(ErrorKind::validation, "corpus.video_frames_per_char must be >= 1");
    if (d_raw == 0) fail(ErrorKind::validation, "corpus.d_raw must be >= 1");
    if (!(jitter >= 0.0)) fail(ErrorKind::validation, "corpus.jitter must be >= 0");
    if (!(valid_fraction >= 0.0) || !(test_fraction >= 0.0) || valid_fraction + test_fraction >= 1.0) {
        fail(ErrorKind::validation, "corpus split fractions must be >= 0 and sum below 1");
    }
}

std::string_view split_name(Split split) {
    switch (split) {
        case Split::train: return "train";
        case Split::valid: return "valid";
        case Split::test: return "test";
    }
    return "?";
}

std::vector<const SyntheticUtterance*> Corpus::split(Split which) const {
    std::vector<const SyntheticUtterance*> out;
    for (const auto& u : utterances) {
        if (u.split == which) out.push_back(&u);
    }
    return out;
}

const SyntheticUtterance& Corpus::by_id(std::uint32_t id) const {
    if (id < utterances.size() && utterances[id].id == id) return utterances[id];
    for (const auto& u : utterances) {
        if (u.id == id) return u;
    }
    fail(ErrorKind::index, "no utterance with id " + std::to_string(id));
}

namespace {

Tensor gaussian_rows(std::size_t rows, std::size_t cols, Rng& rng) {
    std::vector<double> v(rows * cols);
    for (auto& x : v) x = normal(rng);
    return Tensor({rows, cols}, std::move(v));
}

std::vector<Split> assign_splits(const CorpusConfig& config) {
    const std::size_t n = config.n_utts;
    std::vector<std::uint32_t> order(n);
    std::iota(order.begin(), order.end(), 0u);
    Rng rng(derive_seed(config.seed, "split"));
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
    const auto n_test = static_cast<std::size_t>(std::floor(config.test_fraction * static_cast<double>(n)));
    const auto n_valid = static_cast<std::size_t>(std::floor(config.valid_fraction * static_cast<double>(n)));
    std::vector<Split> splits(n, Split::train);
    for (std::size_t i = 0; i < n_test; ++i) splits[order[i]] = Split::test;
    for (std::size_t i = n_test; i < n_test + n_valid; ++i) splits[order[i]] = Split::valid;
    return splits;
}

}  // namespace

Prototypes make_prototypes(const CorpusConfig& config) {
    Rng char_rng(derive_seed(config.seed, "prototypes.characters"));
    Rng viseme_rng(derive_seed(config.seed, "prototypes.visemes"));
    return Prototypes{gaussian_rows(27, config.d_raw, char_rng),
                      gaussian_rows(VisemeMap::standard().class_count(), config.d_raw, viseme_rng)};
}

SyntheticUtterance generate_utterance(const CorpusConfig& config, const Prototypes& prototypes, std::uint32_t id,
                                      Split split) {
    Rng rng(derive_seed(derive_seed(config.seed, "utterance"), id));
    const std::size_t n_words = config.min_words + uniform_index(rng, config.max_words - config.min_words + 1);
    std::string text;
    for (std::size_t w = 0; w < n_words; ++w) {
        if (w) text += ' ';
        text += kLexicon[uniform_index(rng, std::size(kLexicon))];
    }

    const auto& vocab = Vocabulary::standard();
    const auto& visemes = VisemeMap::standard();
    const std::size_t d = config.d_raw;
    const std::size_t v_per_char = config.video_frames_per_char;
    const std::size_t a_per_char = v_per_char * kAudioFramesPerVideoFrame;
    std::vector<double> audio, video;
    audio.reserve(text.size() * a_per_char * d);
    video.reserve(text.size() * v_per_char * d);
    const auto chars = prototypes.characters.data();
    const auto vis = prototypes.visemes.data();
    for (char c : text) {
        const auto row = static_cast<std::size_t>(*vocab.char_token(c) - *vocab.char_token(' '));
        for (std::size_t f = 0; f < a_per_char; ++f) {
            for (std::size_t j = 0; j < d; ++j) audio.push_back(chars[row * d + j] + config.jitter * normal(rng));
        }
        const std::size_t cls = visemes.class_of(c);
        for (std::size_t f = 0; f < v_per_char; ++f) {
            for (std::size_t j = 0; j < d; ++j) video.push_back(vis[cls * d + j] + config.jitter * normal(rng));
        }
    }
    SyntheticUtterance u;
    u.id = id;
    u.split = split;
    u.target = vocab.tokenize(text);
    u.text = std::move(text);
    const std::size_t audio_rows = audio.size() / d, video_rows = video.size() / d;
    u.audio_raw = Tensor({audio_rows, d}, std::move(audio));
    u.video_raw = Tensor({video_rows, d}, std::move(video));
    return u;
}

Corpus generate_corpus(const CorpusConfig& config) {
    config.validate();
    const auto prototypes = make_prototypes(config);
    const auto splits = assign_splits(config);
    Corpus corpus;
    corpus.config = config;
    corpus.utterances.reserve(config.n_utts);
    for (std::uint32_t id = 0; id < config.n_utts; ++id) {
        corpus.utterances.push_back(generate_utterance(config, prototypes, id, splits[id]));
    }
    return corpus;
}

// ---------------------------------------------------------------------------

double mean_power(std::span<const double> values) {
    double s = 0.0;
    for (double v : values) s += v * v;
    return values.empty() ? 0.0 : s / static_cast<double>(values.size());
}

Tensor make_babble(const Corpus& pool, std::uint32_t exclude_id, std::size_t frames, Rng& rng) {
    if (pool.utterances.size() < 2) fail(ErrorKind::validation, "babble needs at least two utterances in the pool");
    const std::size_t d = pool.utterances.front().audio_raw.cols();
    std::vector<double> noise(frames * d, 0.0);
    for (std::size_t talker = 0; talker < kBabbleTalkers; ++talker) {
        const SyntheticUtterance* other = nullptr;
        do {
            other = &pool.utterances[uniform_index(rng, pool.utterances.size())];
        } while (other->id == exclude_id);
        const auto src = other->audio_raw.data();
        const std::size_t len = other->audio_raw.rows();
        const std::size_t start = uniform_index(rng, len);
        for (std::size_t f = 0; f < frames; ++f) {
            const std::size_t r = (start + f) % len;
            for (std::size_t j = 0; j < d; ++j) noise[f * d + j] += src[r * d + j];
        }
    }
    for (auto& x : noise) x /= static_cast<double>(kBabbleTalkers);
    return Tensor({frames, d}, std::move(noise));
}

Tensor mix_at_snr(const Tensor& signal, const Tensor& noise, double snr_db) {
    if (std::isinf(snr_db) && snr_db > 0) return signal;
    if (!std::isfinite(snr_db)) fail(ErrorKind::validation, "SNR must be finite or +inf");
    if (signal.shape() != noise.shape()) fail(ErrorKind::dimension, "noise and signal shapes differ");
    const double ps = mean_power(signal.data());
    const double pn = mean_power(noise.data());
    if (pn <= 0.0) fail(ErrorKind::validation, "noise has zero power");
    const double gain = std::sqrt(ps / (pn * std::pow(10.0, snr_db / 10.0)));
    std::vector<double> out(signal.size());
    const auto s = signal.data(), n = noise.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = s[i] + gain * n[i];
    return Tensor(signal.shape(), std::move(out));
}

Tensor add_noise(const Tensor& audio_raw, double snr_db, const Corpus& pool, std::uint32_t exclude_id, Rng& rng) {
    if (std::isinf(snr_db) && snr_db > 0) return audio_raw;
    return mix_at_snr(audio_raw, make_babble(pool, exclude_id, audio_raw.rows(), rng), snr_db);
}

// ---------------------------------------------------------------------------

namespace {

std::string corpus_metadata(const Corpus& corpus) {
    const auto& c = corpus.config;
    std::ostringstream os;
    os.precision(17);
    os << "kind=corpus\n"
       << "n_utts=" << c.n_utts << "\nmin_words=" << c.min_words << "\nmax_words=" << c.max_words
       << "\nvideo_frames_per_char=" << c.video_frames_per_char << "\nd_raw=" << c.d_raw << "\njitter=" << c.jitter
       << "\nvalid_fraction=" << c.valid_fraction << "\ntest_fraction=" << c.test_fraction << "\nseed=" << c.seed
       << "\n";
    for (const auto& u : corpus.utterances) {
        os << "utt\t" << u.id << '\t' << split_name(u.split) << '\t' << u.text << '\n';
    }
    return os.str();
}

}  // namespace

void write_corpus(const std::filesystem::path& dir, const Corpus& corpus) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) fail(ErrorKind::io, "cannot create '" + dir.string() + "': " + ec.message());
    Container c;
    c.metadata = corpus_metadata(corpus);
    for (const auto& u : corpus.utterances) {
        c.entries.push_back({std::to_string(u.id) + ".audio", u.audio_raw, true});
        c.entries.push_back({std::to_string(u.id) + ".video", u.video_raw, true});
    }
    write_container(dir / kCorpusFile, c);
    for (auto split : {Split::train, Split::valid, Split::test}) {
        std::ostringstream os;
        os << "id\ttext\taudio_frames\tvideo_frames\n";
        for (const auto* u : corpus.split(split)) {
            os << u->id << '\t' << u->text << '\t' << u->audio_raw.rows() << '\t' << u->video_raw.rows() << '\n';
        }
        write_file_atomic(dir / (std::string(split_name(split)) + ".tsv"), os.str());
    }
}

Corpus read_corpus(const std::filesystem::path& dir) {
    const auto path = dir / kCorpusFile;
    if (!std::filesystem::exists(path)) fail(ErrorKind::io, "no corpus at '" + path.string() + "'");
    const Container c = read_container(path);
    Corpus corpus;
    std::istringstream is(c.metadata);
    std::string line;
    bool is_corpus = false;
    while (std::getline(is, line)) {
        if (line.rfind("utt\t", 0) == 0) {
            std::istringstream ls(line.substr(4));
            std::string id, split, text;
            std::getline(ls, id, '\t');
            std::getline(ls, split, '\t');
            std::getline(ls, text);
            SyntheticUtterance u;
            u.id = static_cast<std::uint32_t>(std::stoul(id));
            u.split = split == "test" ? Split::test : split == "valid" ? Split::valid : Split::train;
            u.text = text;
            u.target = Vocabulary::standard().tokenize(text);
            u.audio_raw = c.at(id + ".audio").tensor.detach_copy();
            u.video_raw = c.at(id + ".video").tensor.detach_copy();
            corpus.utterances.push_back(std::move(u));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
        auto& cfg = corpus.config;
        if (key == "kind") is_corpus = value == "corpus";
        else if (key == "n_utts") cfg.n_utts = std::stoull(value);
        else if (key == "min_words") cfg.min_words = std::stoull(value);
        else if (key == "max_words") cfg.max_words = std::stoull(value);
        else if (key == "video_frames_per_char") cfg.video_frames_per_char = std::stoull(value);
        else if (key == "d_raw") cfg.d_raw = std::stoull(value);
        else if (key == "jitter") cfg.jitter = std::stod(value);
        else if (key == "valid_fraction") cfg.valid_fraction = std::stod(value);
        else if (key == "test_fraction") cfg.test_fraction = std::stod(value);
        else if (key == "seed") cfg.seed = std::stoull(value);
    }
    if (!is_corpus) fail(ErrorKind::io, "'" + path.string() + "' is not a corpus container");
    return corpus;
}

}  // namespace omni
