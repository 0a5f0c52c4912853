#include "omni/random.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "omni/error.hpp"

namespace omni {

std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) noexcept { return mix64(mix64(seed) ^ salt); }

std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream) noexcept {
    Fnv1a h;
    h.update(stream);
    return derive_seed(seed, h.digest());
}

double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

double normal(Rng& rng) {
    double u1 = uniform01(rng);
    while (u1 <= 0.0) u1 = uniform01(rng);
    const double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::size_t uniform_index(Rng& rng, std::size_t n) {
    if (n == 0) fail(ErrorKind::contract, "uniform_index over an empty range");
    // Rejection sampling keeps the draw exactly uniform.
    const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % n);
    std::uint64_t x = rng();
    while (x >= limit) x = rng();
    return static_cast<std::size_t>(x % n);
}

std::string rng_state(const Rng& rng) {
    std::ostringstream os;
    os << rng;
    return os.str();
}

void set_rng_state(Rng& rng, const std::string& state) {
    std::istringstream is(state);
    is >> rng;
    if (is.fail()) fail(ErrorKind::io, "corrupt random-generator state");
}

void Fnv1a::update(const void* data, std::size_t size) noexcept {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < size; ++i) {
        state_ ^= bytes[i];
        state_ *= 0x100000001b3ULL;
    }
}

}  // namespace omni
