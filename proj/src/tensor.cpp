#include "sensia/tensor.hpp"

#include <cmath>
#include <numeric>
#include <unordered_set>

#include "sensia/errors.hpp"

namespace sensia::ad {

namespace {
thread_local bool g_grad_enabled = true;
}

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const std::size_t n = shape_size(shape);
  return from(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values,
                    bool requires_grad) {
  if (shape_size(shape) != values.size()) {
    throw InvalidArgument("tensor value count does not match shape");
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  node->is_leaf = true;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double v) { return from({}, {v}); }

std::size_t Tensor::rows() const {
  const Shape& s = node_->shape;
  if (s.size() <= 1) return 1;
  return node_->value.size() / s.back();
}

std::size_t Tensor::cols() const {
  const Shape& s = node_->shape;
  if (s.empty()) return 1;
  return s.back();
}

double Tensor::item() const {
  if (size() != 1) throw InvalidArgument("item() requires a single value");
  return node_->value[0];
}

void Tensor::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach() const {
  return from(node_->shape, node_->value, false);
}

void Tensor::backward() const {
  if (size() != 1) throw InvalidArgument("backward() requires a scalar loss");
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* n : order) {
    if (!n->is_leaf) {
      n->grad.assign(n->value.size(), 0.0);
    } else {
      n->ensure_grad();
    }
  }
  node_->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward) (*it)->backward(**it);
  }
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) {
  g_grad_enabled = false;
}

NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Tensor make_node(Shape shape, std::vector<double> value,
                 std::vector<Tensor> parents,
                 std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->is_leaf = false;
  bool needs = false;
  if (g_grad_enabled) {
    for (const Tensor& p : parents) needs = needs || p.requires_grad();
  }
  node->requires_grad = needs;
  if (needs) {
    node->parents.reserve(parents.size());
    for (Tensor& p : parents) node->parents.push_back(p.node_ptr());
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

}  // namespace sensia::ad
