#include "tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>
#include <utility>

#include "error.hpp"

namespace rainnas::grad {

namespace {
thread_local bool g_grad_enabled = true;

void check_finite([[maybe_unused]] const std::vector<double>& values, [[maybe_unused]] const char* op) {
#ifndef NDEBUG
    for (double v : values) {
        if (!std::isfinite(v)) fail(ErrorKind::Numeric, std::string("non-finite value produced by ") + op);
    }
#endif
}
}  // namespace

std::size_t numel_of(const Shape& shape) {
    std::size_t n = 1;
    for (auto e : shape) n *= e;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

std::vector<double>& Node::grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    touched = true;
    return grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    std::vector<double> values(numel_of(shape), value);
    return from(std::move(shape), std::move(values), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
    require(shape.size() <= 4, "tensor rank above 4: " + shape_str(shape));
    require(values.size() == numel_of(shape), "tensor data length " + std::to_string(values.size()) +
                                                  " does not match shape " + shape_str(shape));
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->data = std::move(values);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value) { return from({}, {value}); }

Tensor Tensor::make_result(Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
                           BackwardFn backward_fn, const char* op) {
    check_finite(values, op);
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->data = std::move(values);
    node->op = op;
    if (g_grad_enabled) {
        bool any = std::any_of(inputs.begin(), inputs.end(),
                               [](const Tensor& t) { return t.defined() && t.requires_grad(); });
        if (any) {
            node->requires_grad = true;
            node->backward = std::move(backward_fn);
            for (auto& t : inputs)
                if (t.defined()) node->inputs.push_back(t.node_ptr());
        }
    }
    return Tensor(std::move(node));
}

const Shape& Tensor::shape() const {
    require(defined(), "use of undefined tensor");
    return node_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
    require(axis < rank(), "axis " + std::to_string(axis) + " out of range for " + shape_string());
    return node_->shape[axis];
}

std::size_t Tensor::numel() const { return node_ ? node_->data.size() : 0; }

std::span<const double> Tensor::data() const { return node_->data; }
std::span<double> Tensor::mutable_data() { return node_->data; }

double Tensor::item() const {
    require(numel() == 1, "item() on non-scalar tensor " + shape_string());
    return node_->data[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

void Tensor::set_requires_grad(bool on) {
    require(is_leaf(), "requires_grad can only be set on leaf tensors");
    node_->requires_grad = on;
}

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }
bool Tensor::touched() const { return node_ && node_->touched; }

std::span<const double> Tensor::grad() const { return node_->grad; }
std::span<double> Tensor::mutable_grad() { return node_->grad_buffer(); }

void Tensor::zero_grad() {
    if (!node_) return;
    std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
    node_->touched = false;
}

bool Tensor::is_leaf() const { return node_ && node_->is_leaf(); }

Tensor Tensor::detach() const { return from(shape(), node_->data, false); }

Tensor Tensor::clone() const { return from(shape(), node_->data, is_leaf() && requires_grad()); }

Tape record_tape(const Tensor& root) {
    Tape tape;
    if (!root.requires_grad()) return tape;
    // Iterative post-order DFS; a node is emitted once all its inputs are.
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root.node(), 0);
    visited.insert(root.node());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            Node* child = node->inputs[next++].get();
            if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
        } else {
            tape.order.push_back(node);
            stack.pop_back();
        }
    }
    return tape;
}

void backward(const Tensor& loss) {
    require(loss.defined(), "backward on undefined tensor");
    require(loss.numel() == 1, "backward requires a scalar loss, got shape " + loss.shape_string());
    require(loss.requires_grad(), "backward on a tensor that is not part of a gradient graph");
    Tape tape = record_tape(loss);
    // Interior gradients are per-call scratch. Leaf gradients from this call
    // are computed from zero and then added to what was already there, so
    // repeated calls accumulate exactly.
    std::vector<std::pair<Node*, std::vector<double>>> previous;
    for (Node* n : tape.order) {
        if (!n->is_leaf()) {
            n->grad.assign(n->data.size(), 0.0);
        } else if (!n->grad.empty()) {
            previous.emplace_back(n, std::move(n->grad));
            n->grad.assign(n->data.size(), 0.0);
        }
    }
    loss.node()->grad_buffer()[0] += 1.0;
    for (auto it = tape.order.rbegin(); it != tape.order.rend(); ++it) {
        Node* n = *it;
        if (!n->is_leaf()) n->backward(*n);
    }
    for (auto& [n, old] : previous)
        for (std::size_t i = 0; i < old.size(); ++i) n->grad[i] += old[i];
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

}  // namespace rainnas::grad
