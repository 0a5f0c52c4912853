#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "omni/random.hpp"
#include "omni/tensor.hpp"

namespace omni {

enum class Modality : std::uint8_t { audio = 0, video = 1 };
std::string_view modality_name(Modality modality);

/// Time-indexed feature frames of one modality.
struct TokenStream {
    Modality modality = Modality::audio;
    Tensor frames;          // [L x width]
    double frame_rate = 0;  // frames per second of the stream as given

    std::size_t length() const { return frames.rows(); }
};

/// Integer average-pooling factor along time.
class CompressionRate {
public:
    explicit CompressionRate(std::size_t value);
    std::size_t value() const { return value_; }
    auto operator<=>(const CompressionRate&) const = default;

private:
    std::size_t value_;
};

/// The audio and video rates seen during training.
struct RateMenu {
    std::vector<CompressionRate> audio_rates;
    std::vector<CompressionRate> video_rates;

    /// Nonempty, strictly increasing.
    void validate() const;
    bool contains_audio(CompressionRate rate) const;
    bool contains_video(CompressionRate rate) const;
    bool operator==(const RateMenu&) const = default;
};

RateMenu default_rate_menu();  // {4, 16} audio, {2, 5} video

/// Average pooling; ceil(L / rate) frames, trailing window over its true size.
TokenStream compress(const TokenStream& stream, CompressionRate rate);

/// linear(d_raw -> d_enc) -> relu -> layer_norm, length-preserving.
class ModalityEncoder {
public:
    ModalityEncoder(Modality modality, std::size_t d_raw, std::size_t d_enc, Rng& rng);

    TokenStream encode(const Tensor& raw, double frame_rate) const;
    Modality modality() const { return modality_; }
    std::vector<NamedTensor> parameters() const;

    Tensor weight, bias, norm_gain, norm_bias;

private:
    Modality modality_;
};

/// linear(d_enc -> d_proj) -> relu -> linear(d_proj -> d_model); one per
/// modality, shared across tasks and rates.
class Projector {
public:
    Projector(Modality modality, std::size_t d_enc, std::size_t d_proj, std::size_t d_model, Rng& rng);

    Tensor project(const TokenStream& stream) const;
    Modality modality() const { return modality_; }
    std::vector<NamedTensor> parameters() const;

    Tensor w1, b1, w2, b2;

private:
    Modality modality_;
};

}  // namespace omni
