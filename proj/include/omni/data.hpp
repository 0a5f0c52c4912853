#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "omni/backbone.hpp"
#include "omni/ops.hpp"
#include "omni/random.hpp"
#include "omni/tensor.hpp"

namespace omni {

/// Token ids y_1..y_S of a transcription; the last id is always eos.
struct TargetText {
    std::vector<TokenId> ids;

    std::size_t length() const { return ids.size(); }
};

/// Character vocabulary plus special and prompt-word tokens.
///
/// Layout: pad, bos, eos, the prompt words, space, 'a'..'z'.
class Vocabulary {
public:
    static constexpr TokenId kPad = 0;
    static constexpr TokenId kBos = 1;
    static constexpr TokenId kEos = 2;

    static const Vocabulary& standard();

    std::size_t size() const { return symbols_.size(); }
    TokenId pad() const { return kPad; }
    TokenId bos() const { return kBos; }
    TokenId eos() const { return kEos; }

    /// Character-level; appends eos. Empty or out-of-alphabet input throws.
    TargetText tokenize(std::string_view text) const;
    /// Inverse of tokenize. Stops at eos, skips pad/bos, and spaces prompt
    /// words apart so prompt ids read back as a sentence.
    std::string detokenize(std::span<const TokenId> ids) const;

    TokenId word_token(std::string_view word) const;
    std::optional<TokenId> char_token(char c) const;
    bool is_char_token(TokenId id) const;
    bool in_alphabet(std::string_view text) const;

private:
    Vocabulary();

    std::vector<std::string> symbols_;
    TokenId first_char_ = 0;
};

/// Many-to-one character -> viseme class map. Class 0 is the space.
class VisemeMap {
public:
    static const VisemeMap& standard();

    std::size_t class_count() const { return class_count_; }
    std::size_t class_of(char c) const;
    std::vector<char> members(std::size_t viseme) const;

private:
    VisemeMap();

    std::array<std::uint8_t, 128> table_{};
    std::size_t class_count_ = 0;
};

std::span<const std::string_view> lexicon();  // fixed 200 words

inline constexpr double kAudioFrameRate = 100.0;
inline constexpr double kVideoFrameRate = 25.0;
inline constexpr std::size_t kAudioFramesPerVideoFrame = 4;

struct CorpusConfig {
    std::size_t n_utts = 2000;
    std::size_t min_words = 1;
    std::size_t max_words = 2;
    std::size_t video_frames_per_char = 3;
    std::size_t d_raw = 16;
    double jitter = 0.1;
    double valid_fraction = 0.1;
    double test_fraction = 0.1;
    std::uint64_t seed = 1;

    void validate() const;
    bool operator==(const CorpusConfig&) const = default;
};

enum class Split : std::uint8_t { train = 0, valid = 1, test = 2 };
std::string_view split_name(Split split);

struct SyntheticUtterance {
    std::uint32_t id = 0;
    Split split = Split::train;
    std::string text;
    TargetText target;
    Tensor audio_raw;  // [L_a x d_raw] at 100 frames/s
    Tensor video_raw;  // [L_v x d_raw] at 25 frames/s
    std::optional<double> snr_db;
};

struct Corpus {
    CorpusConfig config;
    std::vector<SyntheticUtterance> utterances;

    std::vector<const SyntheticUtterance*> split(Split which) const;
    const SyntheticUtterance& by_id(std::uint32_t id) const;
};

struct Prototypes {
    Tensor characters;  // [alphabet x d_raw], rows in vocabulary order (space, a..z)
    Tensor visemes;     // [classes x d_raw]
};

Prototypes make_prototypes(const CorpusConfig& config);

/// Deterministic given config.seed; per-utterance streams are derived from
/// (seed, id) so generation order does not matter.
Corpus generate_corpus(const CorpusConfig& config);
SyntheticUtterance generate_utterance(const CorpusConfig& config, const Prototypes& prototypes, std::uint32_t id,
                                      Split split);

inline constexpr double kCleanSnr = std::numeric_limits<double>::infinity();
inline constexpr std::size_t kBabbleTalkers = 8;

/// Babble: mean of `kBabbleTalkers` other utterances' audio streams, each
/// tiled from a random offset to `frames` rows.
Tensor make_babble(const Corpus& pool, std::uint32_t exclude_id, std::size_t frames, Rng& rng);
/// signal + g * noise with g chosen so 10 log10(P_signal / P_scaled_noise)
/// equals snr_db. An infinite snr_db returns the signal unchanged.
Tensor mix_at_snr(const Tensor& signal, const Tensor& noise, double snr_db);
Tensor add_noise(const Tensor& audio_raw, double snr_db, const Corpus& pool, std::uint32_t exclude_id, Rng& rng);
double mean_power(std::span<const double> values);

/// corpus.omni plus train/valid/test manifests (id, text, lengths as TSV).
void write_corpus(const std::filesystem::path& dir, const Corpus& corpus);
Corpus read_corpus(const std::filesystem::path& dir);

inline constexpr std::string_view kCorpusFile = "corpus.omni";

}  // namespace omni
