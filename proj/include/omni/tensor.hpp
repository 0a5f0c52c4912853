#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace omni {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

namespace detail {

// One vertex of the compute graph. Leaves are user-created tensors; interior
// nodes carry the vector-Jacobian rule that pushes `grad` into `inputs`.
struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // empty until the first accumulation
    bool requires_grad = false;
    bool leaf = true;
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void(Node&)> backward;

    std::vector<double>& ensure_grad() {
        if (grad.empty()) grad.assign(value.size(), 0.0);
        return grad;
    }
};

}  // namespace detail

/// Dense row-major array of doubles with reverse-mode autodiff.
///
/// A tensor is a shared handle: copies alias the same storage. Interior
/// tensors are created by the functions in ops.hpp and record their inputs
/// only when at least one input requires a gradient, so inference on frozen
/// weights builds no graph at all.
class Tensor {
public:
    Tensor() = default;
    Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const noexcept { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t size() const;
    // Rank-2 view helpers; a rank-1 tensor is one row.
    std::size_t rows() const;
    std::size_t cols() const;

    std::span<const double> data() const;
    /// Writable storage, restricted to leaves (parameters and inputs).
    std::span<double> mutable_data();
    double item() const;
    double at(std::size_t row, std::size_t col) const;

    bool requires_grad() const;
    void set_requires_grad(bool flag);
    bool is_leaf() const;
    bool has_grad() const;
    std::span<const double> grad() const;
    void zero_grad();

    /// Deep copy of the value as a fresh leaf.
    Tensor detach_copy(bool requires_grad = false) const;

    const std::shared_ptr<detail::Node>& node() const { return node_; }
    static Tensor from_node(std::shared_ptr<detail::Node> node);

private:
    std::shared_ptr<detail::Node> node_;
};

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

/// While alive on a thread, ops on that thread record no graph.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_recording_enabled() noexcept;

/// Back-propagates from a scalar. Leaf gradients accumulate; interior
/// gradients are released once consumed so the same graph can be replayed.
void backward(const Tensor& loss);

}  // namespace omni
