#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace omni {

using Rng = std::mt19937_64;

/// splitmix64 finaliser; used to derive independent seeds.
std::uint64_t mix64(std::uint64_t x) noexcept;
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) noexcept;
/// Seed of a named sub-stream ("data", "init", "rates", "noise", ...).
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream) noexcept;

double uniform01(Rng& rng);
double uniform(Rng& rng, double lo, double hi);
/// Standard normal via Box-Muller; stateless so engine state alone is the
/// full generator state.
double normal(Rng& rng);
std::size_t uniform_index(Rng& rng, std::size_t n);

std::string rng_state(const Rng& rng);
void set_rng_state(Rng& rng, const std::string& state);

/// FNV-1a, for content hashes of tensors and files.
class Fnv1a {
public:
    void update(const void* data, std::size_t size) noexcept;
    void update(std::string_view s) noexcept { update(s.data(), s.size()); }
    std::uint64_t digest() const noexcept { return state_; }

private:
    std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

}  // namespace omni
