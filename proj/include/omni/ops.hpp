#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "omni/tensor.hpp"

namespace omni {

using TokenId = std::int32_t;

// Differentiable ops. Shapes are rank-2 [rows x cols] unless stated; a
// rank-1 operand is treated as a single row.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
/// x[S x n] + bias[n], broadcast over rows (the only broadcast supported).
Tensor add_bias(const Tensor& x, const Tensor& bias);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor relu(const Tensor& a);
/// Per-row normalisation followed by the affine map gamma * xhat + beta.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
Tensor embedding_lookup(const Tensor& table, std::span<const TokenId> ids);
/// Concatenates along the time (row) axis; all parts share the column count.
Tensor concat_time(std::span<const Tensor> parts);
/// Rows [begin, end).
Tensor slice_time(const Tensor& x, std::size_t begin, std::size_t end);
/// Mean over consecutive windows of `rate` rows; a trailing partial window is
/// averaged over its true size. Output has ceil(S / rate) rows.
Tensor avg_pool_time(const Tensor& x, std::size_t rate);
/// Multi-head scaled dot-product attention with a causal mask; q, k, v are
/// [S x d] with d divisible by n_heads.
Tensor causal_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t n_heads);
Tensor sum(const Tensor& x);
/// Sum over rows s with mask[s] of -log softmax(logits[s])[targets[s]].
/// An all-false mask yields 0 and a warning.
Tensor softmax_cross_entropy(const Tensor& logits, std::span<const TokenId> targets,
                             std::span<const std::uint8_t> mask);

// Plain kernels shared with the cache-based decoder so that both paths run
// the same arithmetic in the same order.
namespace kernels {
/// out[m x n] = a[m x k] * b[k x n] (out is overwritten).
void matmul(std::span<const double> a, std::span<const double> b, std::span<double> out, std::size_t m,
            std::size_t k, std::size_t n);
void layer_norm_row(std::span<const double> x, std::span<const double> gamma, std::span<const double> beta,
                    std::span<double> out, double eps);
}  // namespace kernels

}  // namespace omni
