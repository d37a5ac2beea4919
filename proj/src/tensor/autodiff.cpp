#include "unict/tensor/autodiff.hpp"

#include <sstream>
#include <unordered_set>

#include "unict/tensor/op_counter.hpp"

namespace unict::tensor {

std::string to_string(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  os << ']';
  return os.str();
}

namespace {
thread_local bool g_grad_enabled = true;
thread_local OpCounter* g_counter = nullptr;
bool g_finite_checks = true;
}  // namespace

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

void set_finite_checks(bool enabled) { g_finite_checks = enabled; }
bool finite_checks_enabled() { return g_finite_checks; }

CountScope::CountScope(OpCounter& counter) : previous_(g_counter) { g_counter = &counter; }
CountScope::~CountScope() { g_counter = previous_; }

void count_macs(const char* op, std::uint64_t macs) {
  if (g_counter) g_counter->add(op, macs);
}

template <typename T>
void Node<T>::accumulate(const Tensor<T>& g) {
  if (g.size() != value.size()) {
    throw ShapeError(std::string("gradient size mismatch at op ") + op);
  }
  if (grad.empty()) {
    grad = Tensor<T>(value.shape(), g.storage());
    return;
  }
  T* dst = grad.data();
  const T* src = g.data();
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += src[i];
}

template <typename T>
Tensor<T>& Node<T>::grad_buffer() {
  if (grad.empty()) grad = Tensor<T>(value.shape());
  return grad;
}

template <typename T>
Var<T>::Var(Tensor<T> value, bool requires_grad) : node_(std::make_shared<Node<T>>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

template <typename T>
std::size_t backward(const Var<T>& root, const Tensor<T>& seed) {
  if (!root.defined()) throw std::invalid_argument("backward on undefined Var");
  if (seed.size() != root.size()) {
    throw ShapeError("backward seed shape " + to_string(seed.shape()) + " vs root " +
                     to_string(root.shape()));
  }
  if (!root.requires_grad()) return 0;

  // Iterative post-order DFS; `order` ends up children-after-parents.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* p = node->parents[next++].get();
      if (p && p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->accumulate(seed);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    if (node->backward_fn && !node->grad.empty()) {
      node->backward_fn(*node);
    }
    if (!node->is_leaf()) node->grad = Tensor<T>();
  }
  return order.size();
}

template <typename T>
std::size_t backward(const Var<T>& root) {
  return backward(root, Tensor<T>(root.shape(), T{1}));
}

namespace detail {

template <typename T>
void check_finite(const char* op, const Tensor<T>& value) {
  if (!g_finite_checks) return;
  if (!value.all_finite()) {
    throw NumericError(std::string("non-finite value produced by op '") + op + "' with shape " +
                       to_string(value.shape()));
  }
}

template <typename T>
Var<T> make_result(const char* op, Tensor<T> value, std::vector<Var<T>> inputs,
                   std::function<void(Node<T>&)> backward_fn) {
  check_finite(op, value);
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  node->op = op;
  bool needs = false;
  if (g_grad_enabled) {
    for (const auto& in : inputs) {
      if (in.defined() && in.requires_grad()) needs = true;
    }
  }
  if (needs) {
    node->requires_grad = true;
    node->parents.reserve(inputs.size());
    for (auto& in : inputs) node->parents.push_back(in.defined() ? in.node() : nullptr);
    node->backward_fn = std::move(backward_fn);
  }
  return Var<T>(std::move(node));
}

template Var<float> make_result(const char*, Tensor<float>, std::vector<Var<float>>,
                                std::function<void(Node<float>&)>);
template Var<double> make_result(const char*, Tensor<double>, std::vector<Var<double>>,
                                 std::function<void(Node<double>&)>);
template void check_finite(const char*, const Tensor<float>&);
template void check_finite(const char*, const Tensor<double>&);

}  // namespace detail

template struct Node<float>;
template struct Node<double>;
template class Var<float>;
template class Var<double>;
template std::size_t backward(const Var<float>&);
template std::size_t backward(const Var<double>&);
template std::size_t backward(const Var<float>&, const Tensor<float>&);
template std::size_t backward(const Var<double>&, const Tensor<double>&);

}  // namespace unict::tensor
