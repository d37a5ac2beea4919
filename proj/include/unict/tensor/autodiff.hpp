#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "unict/tensor/tensor.hpp"

namespace unict::tensor {

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // allocated on first accumulation
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  // Reads self.grad and accumulates into self.parents.
  std::function<void(Node&)> backward_fn;

  bool is_leaf() const { return parents.empty(); }
  void accumulate(const Tensor<T>& g);
  /// Returns the grad buffer, allocating zeros if needed.
  Tensor<T>& grad_buffer();
};

/// Handle to a value recorded on the dynamic tape. Ops on Vars build the
/// graph implicitly; backward() walks it in reverse topological order.
template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(Tensor<T> value, bool requires_grad = false);
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  bool defined() const { return node_ != nullptr; }
  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t rank() const { return node_->value.rank(); }
  std::size_t dim(std::size_t i) const { return node_->value.dim(i); }
  std::size_t size() const { return node_->value.size(); }
  bool requires_grad() const { return node_->requires_grad; }
  const char* op() const { return node_->op; }

  bool has_grad() const { return !node_->grad.empty(); }
  const Tensor<T>& grad() const { return node_->grad; }
  void zero_grad() { node_->grad = Tensor<T>(); }

  const std::shared_ptr<Node<T>>& node() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Seeds d(root)/d(root) with ones (or `seed`) and propagates. Each node is
/// visited exactly once. Leaf gradients accumulate across calls; interior
/// gradients are released after use. Returns the number of nodes visited.
template <typename T>
std::size_t backward(const Var<T>& root);
template <typename T>
std::size_t backward(const Var<T>& root, const Tensor<T>& seed);

/// Disables graph recording on this thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

/// Turns on/off the post-op finiteness check (on by default).
void set_finite_checks(bool enabled);
bool finite_checks_enabled();

namespace detail {

/// Builds the output node of an op. Parents are only retained (and the
/// backward closure only installed) when some input requires a gradient.
template <typename T>
Var<T> make_result(const char* op, Tensor<T> value, std::vector<Var<T>> inputs,
                   std::function<void(Node<T>&)> backward_fn);

template <typename T>
void check_finite(const char* op, const Tensor<T>& value);

}  // namespace detail

}  // namespace unict::tensor
