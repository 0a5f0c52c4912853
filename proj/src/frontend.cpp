#include "omni/frontend.hpp"

#include <algorithm>
#include <cmath>

#include "omni/error.hpp"
#include "omni/ops.hpp"

namespace omni {

std::string_view modality_name(Modality modality) { return modality == Modality::audio ? "audio" : "video"; }

CompressionRate::CompressionRate(std::size_t value) : value_(value) {
    if (value == 0) fail(ErrorKind::validation, "compression rate must be >= 1");
}

namespace {

void validate_rates(const std::vector<CompressionRate>& rates, const char* which) {
    if (rates.empty()) fail(ErrorKind::validation, std::string(which) + " rate menu is empty");
    for (std::size_t i = 1; i < rates.size(); ++i) {
        if (!(rates[i - 1] < rates[i])) {
            fail(ErrorKind::validation, std::string(which) + " rate menu must be strictly increasing");
        }
    }
}

Tensor init_linear(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::vector<double> v(fan_in * fan_out);
    for (auto& x : v) x = uniform(rng, -bound, bound);
    return Tensor({fan_in, fan_out}, std::move(v), true);
}

}  // namespace

void RateMenu::validate() const {
    validate_rates(audio_rates, "audio");
    validate_rates(video_rates, "video");
}

bool RateMenu::contains_audio(CompressionRate rate) const {
    return std::find(audio_rates.begin(), audio_rates.end(), rate) != audio_rates.end();
}

bool RateMenu::contains_video(CompressionRate rate) const {
    return std::find(video_rates.begin(), video_rates.end(), rate) != video_rates.end();
}

RateMenu default_rate_menu() {
    return RateMenu{{CompressionRate(4), CompressionRate(16)}, {CompressionRate(2), CompressionRate(5)}};
}

TokenStream compress(const TokenStream& stream, CompressionRate rate) {
    return TokenStream{stream.modality, avg_pool_time(stream.frames, rate.value()),
                       stream.frame_rate / static_cast<double>(rate.value())};
}

ModalityEncoder::ModalityEncoder(Modality modality, std::size_t d_raw, std::size_t d_enc, Rng& rng)
    : weight(init_linear(d_raw, d_enc, rng)),
      bias(Tensor::zeros({d_enc}, true)),
      norm_gain(Tensor({d_enc}, std::vector<double>(d_enc, 1.0), true)),
      norm_bias(Tensor::zeros({d_enc}, true)),
      modality_(modality) {}

TokenStream ModalityEncoder::encode(const Tensor& raw, double frame_rate) const {
    if (!raw.defined() || raw.size() == 0) fail(ErrorKind::length, "encode: empty input stream");
    if (raw.cols() != weight.rows()) {
        fail(ErrorKind::dimension, "encode: raw width " + std::to_string(raw.cols()) + " but encoder expects " +
                                       std::to_string(weight.rows()));
    }
    Tensor h = relu(add_bias(matmul(raw, weight), bias));
    return TokenStream{modality_, layer_norm(h, norm_gain, norm_bias), frame_rate};
}

std::vector<NamedTensor> ModalityEncoder::parameters() const {
    const std::string p = "frontend." + std::string(modality_name(modality_)) + ".encoder.";
    return {{p + "weight", weight}, {p + "bias", bias}, {p + "norm.gain", norm_gain}, {p + "norm.bias", norm_bias}};
}

Projector::Projector(Modality modality, std::size_t d_enc, std::size_t d_proj, std::size_t d_model, Rng& rng)
    : w1(init_linear(d_enc, d_proj, rng)),
      b1(Tensor::zeros({d_proj}, true)),
      w2(init_linear(d_proj, d_model, rng)),
      b2(Tensor::zeros({d_model}, true)),
      modality_(modality) {}

Tensor Projector::project(const TokenStream& stream) const {
    if (stream.frames.cols() != w1.rows()) {
        fail(ErrorKind::dimension, "project: stream width " + std::to_string(stream.frames.cols()) +
                                       " but projector expects " + std::to_string(w1.rows()));
    }
    Tensor h = relu(add_bias(matmul(stream.frames, w1), b1));
    return add_bias(matmul(h, w2), b2);
}

std::vector<NamedTensor> Projector::parameters() const {
    const std::string p = "frontend." + std::string(modality_name(modality_)) + ".projector.";
    return {{p + "w1", w1}, {p + "b1", b1}, {p + "w2", w2}, {p + "b2", b2}};
}

}  // namespace omni
