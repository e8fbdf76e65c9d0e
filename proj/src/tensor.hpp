#pragma once

// Reverse-mode automatic differentiation over dense double tensors.
//
// A Tensor is a cheap handle onto a shared graph node. Operations on tensors
// that require gradients record their inputs and a backward closure; calling
// backward() on a scalar result orders the recorded graph into a Tape and
// replays it in reverse. Leaf gradients accumulate across backward() calls
// until zero_grad().

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace rainnas::grad {

using Shape = std::vector<std::size_t>;

std::size_t numel_of(const Shape& shape);
std::string shape_str(const Shape& shape);

struct Node;
using NodePtr = std::shared_ptr<Node>;

// Propagates the owning node's grad into its inputs' grads.
using BackwardFn = std::function<void(Node& self)>;

struct Node {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until a gradient arrives
    bool requires_grad = false;
    bool touched = false;  // received a gradient since the last zero_grad
    std::vector<NodePtr> inputs;
    BackwardFn backward;
    const char* op = "leaf";

    bool is_leaf() const { return !backward; }
    // Allocates grad on first use and returns it.
    std::vector<double>& grad_buffer();
};

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(NodePtr node) : node_(std::move(node)) {}

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double value);

    // Builds an op result. When gradient recording is enabled and any input
    // requires a gradient, the result joins the graph with `backward`.
    static Tensor make_result(Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
                              BackwardFn backward, const char* op);

    bool defined() const { return static_cast<bool>(node_); }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t numel() const;
    std::string shape_string() const { return shape_str(shape()); }

    std::span<const double> data() const;
    std::span<double> mutable_data();
    double item() const;
    double operator[](std::size_t i) const { return data()[i]; }

    bool requires_grad() const;
    void set_requires_grad(bool on);
    bool has_grad() const;
    bool touched() const;
    std::span<const double> grad() const;  // zeros-length if absent
    std::span<double> mutable_grad();      // allocates
    void zero_grad();

    bool is_leaf() const;
    Tensor detach() const;  // new leaf holding a copy of the values
    Tensor clone() const;   // deep copy, keeps requires_grad for leaves

    Node* node() const { return node_.get(); }
    const NodePtr& node_ptr() const { return node_; }

private:
    NodePtr node_;
};

// Topologically ordered record of the graph that produced a scalar; every
// node appears after all of its inputs.
struct Tape {
    std::vector<Node*> order;
};

Tape record_tape(const Tensor& root);

// Accumulates d(loss)/d(leaf) into every leaf that requires a gradient.
void backward(const Tensor& loss);

bool grad_enabled();

// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

}  // namespace rainnas::grad
