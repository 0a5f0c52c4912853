#include "omni/tensor.hpp"

#include <unordered_set>

#include "omni/error.hpp"

namespace omni {

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto extent : shape) n *= extent;
    return n;
}

std::string shape_to_string(const Shape& shape) {
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(shape[i]);
    }
    return out + "]";
}

namespace {

void check_shape(const Shape& shape) {
    if (shape.empty() || shape.size() > 3) {
        fail(ErrorKind::dimension, "tensor rank must be 1..3, got " + shape_to_string(shape));
    }
    for (auto extent : shape) {
        if (extent == 0) fail(ErrorKind::dimension, "zero extent in shape " + shape_to_string(shape));
    }
}

detail::Node& deref(const std::shared_ptr<detail::Node>& node) {
    if (!node) fail(ErrorKind::contract, "use of an undefined tensor");
    return *node;
}

}  // namespace

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
    check_shape(shape);
    if (shape_numel(shape) != values.size()) {
        fail(ErrorKind::dimension, "shape " + shape_to_string(shape) + " needs " +
                                       std::to_string(shape_numel(shape)) + " values, got " +
                                       std::to_string(values.size()));
    }
    node_ = std::make_shared<detail::Node>();
    node_->shape = std::move(shape);
    node_->value = std::move(values);
    node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    const auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return Tensor({1}, {value}, requires_grad); }

Tensor Tensor::from_node(std::shared_ptr<detail::Node> node) {
    Tensor t;
    t.node_ = std::move(node);
    return t;
}

const Shape& Tensor::shape() const { return deref(node_).shape; }

std::size_t Tensor::dim(std::size_t axis) const {
    const auto& s = shape();
    if (axis >= s.size()) fail(ErrorKind::index, "axis out of range for " + shape_to_string(s));
    return s[axis];
}

std::size_t Tensor::size() const { return deref(node_).value.size(); }

std::size_t Tensor::rows() const {
    const auto& s = shape();
    return s.size() == 1 ? 1 : s[0];
}

std::size_t Tensor::cols() const {
    const auto& s = shape();
    return s.size() == 1 ? s[0] : size() / s[0];
}

std::span<const double> Tensor::data() const { return deref(node_).value; }

std::span<double> Tensor::mutable_data() {
    auto& node = deref(node_);
    if (!node.leaf) fail(ErrorKind::contract, "only leaf tensors may be written in place");
    return node.value;
}

double Tensor::item() const {
    const auto& node = deref(node_);
    if (node.value.size() != 1) fail(ErrorKind::contract, "item() on non-scalar " + shape_to_string(node.shape));
    return node.value[0];
}

double Tensor::at(std::size_t row, std::size_t col) const {
    const auto c = cols();
    if (row >= rows() || col >= c) fail(ErrorKind::index, "element index out of range");
    return deref(node_).value[row * c + col];
}

bool Tensor::requires_grad() const { return deref(node_).requires_grad; }

void Tensor::set_requires_grad(bool flag) {
    auto& node = deref(node_);
    if (!node.leaf) fail(ErrorKind::contract, "requires_grad can only be changed on leaves");
    node.requires_grad = flag;
    if (!flag) node.grad.clear();
}

bool Tensor::is_leaf() const { return deref(node_).leaf; }

bool Tensor::has_grad() const { return !deref(node_).grad.empty(); }

std::span<const double> Tensor::grad() const { return deref(node_).grad; }

void Tensor::zero_grad() { deref(node_).grad.clear(); }

Tensor Tensor::detach_copy(bool requires_grad) const {
    return Tensor(shape(), std::vector<double>(data().begin(), data().end()), requires_grad);
}

namespace {
thread_local bool t_grad_enabled = true;
}  // namespace

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }
bool grad_recording_enabled() noexcept { return t_grad_enabled; }

void backward(const Tensor& loss) {
    if (!loss.defined()) fail(ErrorKind::contract, "backward on an undefined tensor");
    if (loss.size() != 1) fail(ErrorKind::contract, "backward needs a scalar, got " + shape_to_string(loss.shape()));
    auto root = loss.node();
    if (!root->requires_grad) return;

    // Iterative post-order DFS gives a topological order of the reachable graph.
    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> seen;
    std::vector<std::pair<detail::Node*, std::size_t>> stack{{root.get(), 0}};
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            detail::Node* child = node->inputs[next++].get();
            if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root->ensure_grad()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::Node* node = *it;
        if (node->leaf || node->grad.empty()) continue;
        node->backward(*node);
        node->grad.clear();
        node->grad.shrink_to_fit();
    }
}

}  // namespace omni
