#pragma once

#include <unistd.h>

#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "omni/ops.hpp"
#include "omni/random.hpp"
#include "omni/tensor.hpp"

namespace omni::test {

// Hand-rolled generators; every property test draws from one of these with a
// fixed seed so failures replay.
inline Tensor random_tensor(Rng& rng, Shape shape, double scale = 1.0, bool requires_grad = false) {
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = scale * normal(rng);
    return Tensor(std::move(shape), std::move(v), requires_grad);
}

// Values bounded away from zero, for ops with a kink there.
inline Tensor away_from_zero(Rng& rng, Shape shape, double margin = 0.05, bool requires_grad = false) {
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) {
        double m = uniform(rng, margin, 1.5);
        x = uniform01(rng) < 0.5 ? -m : m;
    }
    return Tensor(std::move(shape), std::move(v), requires_grad);
}

inline std::size_t draw(Rng& rng, std::size_t lo, std::size_t hi) { return lo + uniform_index(rng, hi - lo + 1); }

inline std::vector<TokenId> random_ids(Rng& rng, std::size_t n, std::size_t vocab) {
    std::vector<TokenId> ids(n);
    for (auto& id : ids) id = static_cast<TokenId>(uniform_index(rng, vocab));
    return ids;
}

struct GradCheck {
    double worst = 0;  // largest relative error over all inputs
    std::string where;
};

// Central-difference check of d f / d inputs, where f is reduced to a scalar
// through a fixed random projection. Relative error is per input tensor:
// ||g - n|| / max(||g|| + ||n||, 1e-12).
inline GradCheck check_gradients(const std::function<Tensor(const std::vector<Tensor>&)>& f,
                                 std::vector<Tensor> inputs, Rng& rng, double eps = 1e-5) {
    for (auto& in : inputs) in.set_requires_grad(true);
    Tensor probe_out = f(inputs);
    Tensor proj = random_tensor(rng, probe_out.shape());
    auto scalar_of = [&](const std::vector<Tensor>& xs) { return sum(mul(f(xs), proj)); };

    Tensor loss = scalar_of(inputs);
    backward(loss);
    GradCheck result;
    for (std::size_t t = 0; t < inputs.size(); ++t) {
        auto& in = inputs[t];
        const std::vector<double> analytic = in.has_grad() ? std::vector<double>(in.grad().begin(), in.grad().end())
                                                           : std::vector<double>(in.size(), 0.0);
        std::vector<double> numeric(in.size());
        {
            NoGradGuard guard;
            auto values = in.mutable_data();
            for (std::size_t i = 0; i < values.size(); ++i) {
                const double saved = values[i];
                values[i] = saved + eps;
                const double up = scalar_of(inputs).item();
                values[i] = saved - eps;
                const double down = scalar_of(inputs).item();
                values[i] = saved;
                numeric[i] = (up - down) / (2 * eps);
            }
        }
        double diff = 0, na = 0, nn = 0;
        for (std::size_t i = 0; i < numeric.size(); ++i) {
            diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
            na += analytic[i] * analytic[i];
            nn += numeric[i] * numeric[i];
        }
        const double rel = std::sqrt(diff) / std::max(std::sqrt(na) + std::sqrt(nn), 1e-12);
        if (rel > result.worst) {
            result.worst = rel;
            result.where = "input " + std::to_string(t);
        }
    }
    return result;
}

inline bool bitwise_equal(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (std::bit_cast<std::uint64_t>(a[i]) != std::bit_cast<std::uint64_t>(b[i])) return false;
    }
    return true;
}

// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::uint64_t counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("omni-test-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

}  // namespace omni::test
