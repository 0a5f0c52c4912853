#include "omni/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "omni/error.hpp"
#include "omni/kernels_internal.hpp"

namespace omni {

namespace {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

// Builds an interior node. Inputs and the backward rule are recorded only
// when some input participates in differentiation.
Tensor make_result(Shape shape, std::vector<double> value, std::vector<Tensor> inputs,
                   std::function<void(Node&)> rule) {
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->value = std::move(value);
    node->leaf = false;
    for (const auto& in : inputs) {
        if (!grad_recording_enabled()) break;
        if (in.requires_grad()) {
            node->requires_grad = true;
            break;
        }
    }
    if (node->requires_grad) {
        node->inputs.reserve(inputs.size());
        for (auto& in : inputs) node->inputs.push_back(in.node());
        node->backward = std::move(rule);
    }
    return Tensor::from_node(std::move(node));
}

// Gradient buffer of input i, or nullptr when that input is frozen.
double* grad_of(Node& self, std::size_t i) {
    Node& in = *self.inputs[i];
    if (!in.requires_grad) return nullptr;
    return in.ensure_grad().data();
}

void require_defined(const Tensor& t, const char* op) {
    if (!t.defined()) fail(ErrorKind::contract, std::string(op) + ": undefined operand");
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    require_defined(a, op);
    require_defined(b, op);
    if (a.shape() != b.shape()) {
        fail(ErrorKind::dimension, std::string(op) + ": shapes " + shape_to_string(a.shape()) + " and " +
                                       shape_to_string(b.shape()) + " differ");
    }
}

Shape matrix_shape(std::size_t rows, std::size_t cols) { return {rows, cols}; }

}  // namespace

namespace kernels {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> out, std::size_t m,
            std::size_t k, std::size_t n) {
    std::fill(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(m * n), 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        double* __restrict orow = out.data() + i * n;
        const double* arow = a.data() + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            const double* __restrict brow = b.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
}

void layer_norm_row(std::span<const double> x, std::span<const double> gamma, std::span<const double> beta,
                    std::span<double> out, double eps) {
    const std::size_t n = x.size();
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    const double rstd = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) out[j] = gamma[j] * ((x[j] - mean) * rstd) + beta[j];
}

void attention_row(const double* q, const double* keys, const double* values, std::size_t n_keys, std::size_t d,
                   std::size_t n_heads, double* out, double* probs) {
    const std::size_t dh = d / n_heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<double> local;
    if (probs == nullptr) {
        local.resize(n_heads * n_keys);
        probs = local.data();
    }
    for (std::size_t h = 0; h < n_heads; ++h) {
        const std::size_t off = h * dh;
        double* p = probs + h * n_keys;
        double peak = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n_keys; ++j) {
            const double* kj = keys + j * d + off;
            double s = 0.0;
            for (std::size_t c = 0; c < dh; ++c) s += q[off + c] * kj[c];
            p[j] = s * inv_sqrt;
            peak = std::max(peak, p[j]);
        }
        double z = 0.0;
        for (std::size_t j = 0; j < n_keys; ++j) {
            p[j] = std::exp(p[j] - peak);
            z += p[j];
        }
        for (std::size_t j = 0; j < n_keys; ++j) p[j] /= z;
        double* o = out + off;
        std::fill(o, o + dh, 0.0);
        for (std::size_t j = 0; j < n_keys; ++j) {
            const double* vj = values + j * d + off;
            const double w = p[j];
            for (std::size_t c = 0; c < dh; ++c) o[c] += w * vj[c];
        }
    }
}

}  // namespace kernels

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_defined(a, "matmul");
    require_defined(b, "matmul");
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    if (b.rows() != k || a.rank() > 2 || b.rank() > 2) {
        fail(ErrorKind::dimension,
             "matmul: cannot multiply " + shape_to_string(a.shape()) + " by " + shape_to_string(b.shape()));
    }
    std::vector<double> out(m * n);
    kernels::matmul(a.data(), b.data(), out, m, k, n);
    return make_result(matrix_shape(m, n), std::move(out), {a, b}, [m, k, n](Node& self) {
        const double* dc = self.grad.data();
        const auto& av = self.inputs[0]->value;
        const auto& bv = self.inputs[1]->value;
        if (double* da = grad_of(self, 0)) {
            // dA = dC * B^T, accumulated row by row over a transposed copy of B
            std::vector<double> bt(n * k);
            for (std::size_t p = 0; p < k; ++p) {
                for (std::size_t j = 0; j < n; ++j) bt[j * k + p] = bv[p * n + j];
            }
            for (std::size_t i = 0; i < m; ++i) {
                const double* dci = dc + i * n;
                double* __restrict dai = da + i * k;
                for (std::size_t j = 0; j < n; ++j) {
                    const double g = dci[j];
                    const double* __restrict btj = bt.data() + j * k;
                    for (std::size_t p = 0; p < k; ++p) dai[p] += g * btj[p];
                }
            }
        }
        if (double* db = grad_of(self, 1)) {
            // dB = A^T * dC
            for (std::size_t i = 0; i < m; ++i) {
                const double* dci = dc + i * n;
                for (std::size_t p = 0; p < k; ++p) {
                    const double aip = av[i * k + p];
                    double* dbp = db + p * n;
                    for (std::size_t j = 0; j < n; ++j) dbp[j] += aip * dci[j];
                }
            }
        }
    });
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    std::vector<double> out(a.size());
    const auto av = a.data(), bv = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
    return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
        const auto& g = self.grad;
        for (std::size_t in = 0; in < 2; ++in) {
            if (double* d = grad_of(self, in)) {
                for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
            }
        }
    });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
    require_defined(x, "add_bias");
    require_defined(bias, "add_bias");
    const std::size_t rows = x.rows(), cols = x.cols();
    if (bias.size() != cols || x.rank() > 2) {
        fail(ErrorKind::dimension, "add_bias: bias " + shape_to_string(bias.shape()) + " does not match " +
                                       shape_to_string(x.shape()));
    }
    std::vector<double> out(x.data().begin(), x.data().end());
    const auto bv = bias.data();
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] += bv[c];
    }
    return make_result(x.shape(), std::move(out), {x, bias}, [rows, cols](Node& self) {
        const auto& g = self.grad;
        if (double* dx = grad_of(self, 0)) {
            for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
        }
        if (double* db = grad_of(self, 1)) {
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t c = 0; c < cols; ++c) db[c] += g[r * cols + c];
            }
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    std::vector<double> out(a.size());
    const auto av = a.data(), bv = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
    return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
        const auto& g = self.grad;
        const auto& av = self.inputs[0]->value;
        const auto& bv = self.inputs[1]->value;
        if (double* da = grad_of(self, 0)) {
            for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * bv[i];
        }
        if (double* db = grad_of(self, 1)) {
            for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i] * av[i];
        }
    });
}

Tensor scale(const Tensor& a, double factor) {
    require_defined(a, "scale");
    std::vector<double> out(a.size());
    const auto av = a.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * factor;
    return make_result(a.shape(), std::move(out), {a}, [factor](Node& self) {
        const auto& g = self.grad;
        if (double* d = grad_of(self, 0)) {
            for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * factor;
        }
    });
}

Tensor relu(const Tensor& a) {
    require_defined(a, "relu");
    std::vector<double> out(a.size());
    const auto av = a.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] > 0.0 ? av[i] : 0.0;
    return make_result(a.shape(), std::move(out), {a}, [](Node& self) {
        const auto& g = self.grad;
        const auto& av = self.inputs[0]->value;
        if (double* d = grad_of(self, 0)) {
            for (std::size_t i = 0; i < g.size(); ++i) {
                if (av[i] > 0.0) d[i] += g[i];
            }
        }
    });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    require_defined(x, "layer_norm");
    const std::size_t rows = x.rows(), cols = x.cols();
    if (gamma.size() != cols || beta.size() != cols || x.rank() > 2) {
        fail(ErrorKind::dimension, "layer_norm: affine parameters do not match " + shape_to_string(x.shape()));
    }
    std::vector<double> out(x.size());
    std::vector<double> xhat(x.size());
    std::vector<double> rstd(rows);
    const auto xv = x.data(), gv = gamma.data(), bv = beta.data();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = xv.data() + r * cols;
        double mean = 0.0;
        for (std::size_t c = 0; c < cols; ++c) mean += row[c];
        mean /= static_cast<double>(cols);
        double var = 0.0;
        for (std::size_t c = 0; c < cols; ++c) var += (row[c] - mean) * (row[c] - mean);
        var /= static_cast<double>(cols);
        rstd[r] = 1.0 / std::sqrt(var + eps);
        for (std::size_t c = 0; c < cols; ++c) {
            const double h = (row[c] - mean) * rstd[r];
            xhat[r * cols + c] = h;
            out[r * cols + c] = gv[c] * h + bv[c];
        }
    }
    return make_result(x.shape(), std::move(out), {x, gamma, beta},
                       [rows, cols, xhat = std::move(xhat), rstd = std::move(rstd)](Node& self) {
                           const auto& g = self.grad;
                           const auto& gv = self.inputs[1]->value;
                           double* dx = grad_of(self, 0);
                           double* dg = grad_of(self, 1);
                           double* db = grad_of(self, 2);
                           std::vector<double> dh(cols);
                           for (std::size_t r = 0; r < rows; ++r) {
                               const double* gr = g.data() + r * cols;
                               const double* hr = xhat.data() + r * cols;
                               if (dg) {
                                   for (std::size_t c = 0; c < cols; ++c) dg[c] += gr[c] * hr[c];
                               }
                               if (db) {
                                   for (std::size_t c = 0; c < cols; ++c) db[c] += gr[c];
                               }
                               if (dx) {
                                   double mean_dh = 0.0, mean_dh_h = 0.0;
                                   for (std::size_t c = 0; c < cols; ++c) {
                                       dh[c] = gr[c] * gv[c];
                                       mean_dh += dh[c];
                                       mean_dh_h += dh[c] * hr[c];
                                   }
                                   mean_dh /= static_cast<double>(cols);
                                   mean_dh_h /= static_cast<double>(cols);
                                   for (std::size_t c = 0; c < cols; ++c) {
                                       dx[r * cols + c] += rstd[r] * (dh[c] - mean_dh - hr[c] * mean_dh_h);
                                   }
                               }
                           }
                       });
}

Tensor embedding_lookup(const Tensor& table, std::span<const TokenId> ids) {
    require_defined(table, "embedding_lookup");
    if (ids.empty()) fail(ErrorKind::length, "embedding_lookup: empty id sequence");
    const std::size_t vocab = table.rows(), d = table.cols();
    std::vector<double> out(ids.size() * d);
    const auto tv = table.data();
    for (std::size_t s = 0; s < ids.size(); ++s) {
        if (ids[s] < 0 || static_cast<std::size_t>(ids[s]) >= vocab) {
            fail(ErrorKind::index, "embedding_lookup: id " + std::to_string(ids[s]) + " outside vocabulary of " +
                                       std::to_string(vocab));
        }
        std::copy_n(tv.begin() + static_cast<std::ptrdiff_t>(ids[s] * d), d, out.begin() + s * d);
    }
    std::vector<TokenId> kept(ids.begin(), ids.end());
    return make_result(matrix_shape(ids.size(), d), std::move(out), {table}, [kept = std::move(kept), d](Node& self) {
        const auto& g = self.grad;
        if (double* dt = grad_of(self, 0)) {
            for (std::size_t s = 0; s < kept.size(); ++s) {
                double* row = dt + static_cast<std::size_t>(kept[s]) * d;
                for (std::size_t c = 0; c < d; ++c) row[c] += g[s * d + c];
            }
        }
    });
}

Tensor concat_time(std::span<const Tensor> parts) {
    if (parts.empty()) fail(ErrorKind::length, "concat_time: nothing to concatenate");
    const std::size_t cols = parts.front().cols();
    std::size_t rows = 0;
    for (const auto& p : parts) {
        require_defined(p, "concat_time");
        if (p.cols() != cols || p.rank() > 2) {
            fail(ErrorKind::dimension, "concat_time: " + shape_to_string(p.shape()) + " does not have " +
                                           std::to_string(cols) + " columns");
        }
        rows += p.rows();
    }
    std::vector<double> out;
    out.reserve(rows * cols);
    std::vector<std::size_t> offsets;
    for (const auto& p : parts) {
        offsets.push_back(out.size());
        out.insert(out.end(), p.data().begin(), p.data().end());
    }
    std::vector<Tensor> inputs(parts.begin(), parts.end());
    return make_result(matrix_shape(rows, cols), std::move(out), std::move(inputs),
                       [offsets = std::move(offsets)](Node& self) {
                           const auto& g = self.grad;
                           for (std::size_t i = 0; i < self.inputs.size(); ++i) {
                               if (double* d = grad_of(self, i)) {
                                   const std::size_t n = self.inputs[i]->value.size();
                                   for (std::size_t j = 0; j < n; ++j) d[j] += g[offsets[i] + j];
                               }
                           }
                       });
}

Tensor slice_time(const Tensor& x, std::size_t begin, std::size_t end) {
    require_defined(x, "slice_time");
    if (begin >= end || end > x.rows()) {
        fail(ErrorKind::index, "slice_time: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                                   ") invalid for " + std::to_string(x.rows()) + " rows");
    }
    const std::size_t cols = x.cols();
    const auto xv = x.data();
    std::vector<double> out(xv.begin() + static_cast<std::ptrdiff_t>(begin * cols),
                            xv.begin() + static_cast<std::ptrdiff_t>(end * cols));
    return make_result(matrix_shape(end - begin, cols), std::move(out), {x}, [begin, cols](Node& self) {
        const auto& g = self.grad;
        if (double* d = grad_of(self, 0)) {
            double* base = d + begin * cols;
            for (std::size_t i = 0; i < g.size(); ++i) base[i] += g[i];
        }
    });
}

Tensor avg_pool_time(const Tensor& x, std::size_t rate) {
    require_defined(x, "avg_pool_time");
    if (rate == 0) fail(ErrorKind::contract, "avg_pool_time: rate must be >= 1");
    if (rate == 1) return x;
    const std::size_t rows = x.rows(), cols = x.cols();
    const std::size_t out_rows = (rows + rate - 1) / rate;
    std::vector<double> out(out_rows * cols, 0.0);
    const auto xv = x.data();
    for (std::size_t k = 0; k < out_rows; ++k) {
        const std::size_t lo = k * rate, hi = std::min(rows, lo + rate);
        double* o = out.data() + k * cols;
        for (std::size_t r = lo; r < hi; ++r) {
            for (std::size_t c = 0; c < cols; ++c) o[c] += xv[r * cols + c];
        }
        const double inv = 1.0 / static_cast<double>(hi - lo);
        for (std::size_t c = 0; c < cols; ++c) o[c] *= inv;
    }
    return make_result(matrix_shape(out_rows, cols), std::move(out), {x}, [rows, cols, rate, out_rows](Node& self) {
        const auto& g = self.grad;
        if (double* d = grad_of(self, 0)) {
            for (std::size_t k = 0; k < out_rows; ++k) {
                const std::size_t lo = k * rate, hi = std::min(rows, lo + rate);
                const double inv = 1.0 / static_cast<double>(hi - lo);
                for (std::size_t r = lo; r < hi; ++r) {
                    for (std::size_t c = 0; c < cols; ++c) d[r * cols + c] += g[k * cols + c] * inv;
                }
            }
        }
    });
}

Tensor causal_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t n_heads) {
    require_same_shape(q, k, "causal_attention");
    require_same_shape(q, v, "causal_attention");
    const std::size_t s_len = q.rows(), d = q.cols();
    if (n_heads == 0 || d % n_heads != 0) {
        fail(ErrorKind::dimension, "causal_attention: width " + std::to_string(d) + " not divisible by " +
                                       std::to_string(n_heads) + " heads");
    }
    std::vector<double> out(s_len * d);
    // probs[i] holds n_heads rows of length i+1, packed back to back.
    std::vector<std::size_t> prob_offset(s_len);
    std::size_t total = 0;
    for (std::size_t i = 0; i < s_len; ++i) {
        prob_offset[i] = total;
        total += n_heads * (i + 1);
    }
    std::vector<double> probs(total);
    const auto qv = q.data(), kv = k.data(), vv = v.data();
    for (std::size_t i = 0; i < s_len; ++i) {
        kernels::attention_row(qv.data() + i * d, kv.data(), vv.data(), i + 1, d, n_heads, out.data() + i * d,
                               probs.data() + prob_offset[i]);
    }
    return make_result(
        matrix_shape(s_len, d), std::move(out), {q, k, v},
        [s_len, d, n_heads, probs = std::move(probs), prob_offset = std::move(prob_offset)](Node& self) {
            const auto& g = self.grad;
            const auto& qv = self.inputs[0]->value;
            const auto& kv = self.inputs[1]->value;
            const auto& vv = self.inputs[2]->value;
            double* dq = grad_of(self, 0);
            double* dk = grad_of(self, 1);
            double* dv = grad_of(self, 2);
            const std::size_t dh = d / n_heads;
            const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
            std::vector<double> dp(s_len);
            for (std::size_t i = 0; i < s_len; ++i) {
                const std::size_t n_keys = i + 1;
                for (std::size_t h = 0; h < n_heads; ++h) {
                    const std::size_t off = h * dh;
                    const double* p = probs.data() + prob_offset[i] + h * n_keys;
                    const double* gi = g.data() + i * d + off;
                    double dot = 0.0;
                    for (std::size_t j = 0; j < n_keys; ++j) {
                        const double* vj = vv.data() + j * d + off;
                        double s = 0.0;
                        for (std::size_t c = 0; c < dh; ++c) s += gi[c] * vj[c];
                        dp[j] = s;
                        dot += p[j] * s;
                        if (dv) {
                            double* dvj = dv + j * d + off;
                            for (std::size_t c = 0; c < dh; ++c) dvj[c] += p[j] * gi[c];
                        }
                    }
                    const double* qi = qv.data() + i * d + off;
                    for (std::size_t j = 0; j < n_keys; ++j) {
                        const double ds = p[j] * (dp[j] - dot) * inv_sqrt;
                        if (ds == 0.0) continue;
                        const double* kj = kv.data() + j * d + off;
                        if (dq) {
                            double* dqi = dq + i * d + off;
                            for (std::size_t c = 0; c < dh; ++c) dqi[c] += ds * kj[c];
                        }
                        if (dk) {
                            double* dkj = dk + j * d + off;
                            for (std::size_t c = 0; c < dh; ++c) dkj[c] += ds * qi[c];
                        }
                    }
                }
            }
        });
}

Tensor sum(const Tensor& x) {
    require_defined(x, "sum");
    double s = 0.0;
    for (double v : x.data()) s += v;
    return make_result({1}, {s}, {x}, [](Node& self) {
        const double g = self.grad[0];
        if (double* d = grad_of(self, 0)) {
            const std::size_t n = self.inputs[0]->value.size();
            for (std::size_t i = 0; i < n; ++i) d[i] += g;
        }
    });
}

Tensor softmax_cross_entropy(const Tensor& logits, std::span<const TokenId> targets,
                             std::span<const std::uint8_t> mask) {
    require_defined(logits, "softmax_cross_entropy");
    const std::size_t rows = logits.rows(), vocab = logits.cols();
    if (targets.size() != rows || mask.size() != rows) {
        fail(ErrorKind::dimension, "softmax_cross_entropy: " + std::to_string(rows) + " rows but " +
                                       std::to_string(targets.size()) + " targets and " +
                                       std::to_string(mask.size()) + " mask entries");
    }
    const auto lv = logits.data();
    std::vector<double> softmax(rows * vocab, 0.0);
    double loss = 0.0;
    bool any = false;
    for (std::size_t s = 0; s < rows; ++s) {
        if (!mask[s]) continue;
        any = true;
        if (targets[s] < 0 || static_cast<std::size_t>(targets[s]) >= vocab) {
            fail(ErrorKind::index, "softmax_cross_entropy: target " + std::to_string(targets[s]) +
                                       " outside vocabulary of " + std::to_string(vocab));
        }
        const double* row = lv.data() + s * vocab;
        double peak = row[0];
        for (std::size_t c = 1; c < vocab; ++c) peak = std::max(peak, row[c]);
        double z = 0.0;
        for (std::size_t c = 0; c < vocab; ++c) z += std::exp(row[c] - peak);
        const double lse = peak + std::log(z);
        loss += lse - row[targets[s]];
        double* sm = softmax.data() + s * vocab;
        for (std::size_t c = 0; c < vocab; ++c) sm[c] = std::exp(row[c] - lse);
    }
    if (!any) warn("softmax_cross_entropy: mask selects no positions; loss defined as 0");
    std::vector<TokenId> kept(targets.begin(), targets.end());
    std::vector<std::uint8_t> kept_mask(mask.begin(), mask.end());
    return make_result({1}, {loss}, {logits},
                       [rows, vocab, softmax = std::move(softmax), kept = std::move(kept),
                        kept_mask = std::move(kept_mask)](Node& self) {
                           const double g = self.grad[0];
                           if (double* d = grad_of(self, 0)) {
                               for (std::size_t s = 0; s < rows; ++s) {
                                   if (!kept_mask[s]) continue;
                                   const double* sm = softmax.data() + s * vocab;
                                   double* ds = d + s * vocab;
                                   for (std::size_t c = 0; c < vocab; ++c) ds[c] += g * sm[c];
                                   ds[kept[s]] -= g;
                               }
                           }
                       });
}

}  // namespace omni
