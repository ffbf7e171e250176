#pragma once

// Dense 64-bit arrays with reverse-mode differentiation.
//
// A Tensor is a cheap handle onto a graph node. Operations in ops.hpp create
// new nodes that remember their parents and a backward rule; calling
// backward() on a scalar result replays the recorded graph in reverse
// topological order. Leaves created with requires_grad accumulate gradients
// across calls until zero_grad(); interior gradients are reset per call.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace sensia::ad {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  bool is_leaf = true;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double v);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t size() const { return node_->value.size(); }
  // Matrix view: last dimension is columns, everything before it rows.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> values() const { return node_->value; }
  std::span<double> mutable_values() { return node_->value; }
  double item() const;
  double at(std::size_t r, std::size_t c) const {
    return node_->value[r * cols() + c];
  }

  bool requires_grad() const { return node_->requires_grad; }
  // Leaves only; toggles whether backward passes accumulate into this tensor.
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  // Empty span until a backward pass reaches this tensor.
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  void zero_grad();

  // Differentiates this scalar with respect to every requires_grad leaf
  // reachable from it. Throws InvalidArgument for non-scalar tensors.
  void backward() const;

  // A leaf sharing no history with this tensor; values are copied.
  Tensor detach() const;

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& node_ptr() const { return node_; }

  // Wraps an existing node; used by the op implementations.
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<Node> node_;
};

// Graph recording toggle. Thread-local so concurrent evaluation threads do
// not interfere with each other.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Builds an interior node. `backward` is only retained when gradients are
// being recorded and at least one parent requires them.
Tensor make_node(Shape shape, std::vector<double> value,
                 std::vector<Tensor> parents,
                 std::function<void(Node&)> backward);

}  // namespace sensia::ad
