#pragma once

#include <cstddef>

namespace omni::kernels {

/// One query row attending to `n_keys` cached key/value rows of width d.
/// `probs` (optional) receives n_heads x n_keys attention weights.
void attention_row(const double* q, const double* keys, const double* values, std::size_t n_keys, std::size_t d,
                   std::size_t n_heads, double* out, double* probs = nullptr);

}  // namespace omni::kernels
