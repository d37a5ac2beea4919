#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "unict/tensor/autodiff.hpp"

namespace unict::tensor {

using Rng = std::mt19937_64;

template <typename T>
struct NamedParameter {
  std::string name;
  Var<T> var;
};

/// Ordered registry of trainable leaves. Registration order is the
/// serialization and optimizer order.
template <typename T>
class ParameterStore {
 public:
  Var<T> add(const std::string& name, Tensor<T> init) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
    index_[name] = entries_.size();
    entries_.push_back({name, Var<T>(std::move(init), true)});
    return entries_.back().var;
  }

  const std::vector<NamedParameter<T>>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  /// Total scalar count across all parameters.
  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.var.size();
    return n;
  }

  const Var<T>& at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("unknown parameter: " + name);
    return entries_[it->second].var;
  }
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  void zero_grad() {
    for (auto& e : entries_) e.var.zero_grad();
  }

  std::map<std::string, Tensor<T>> snapshot() const {
    std::map<std::string, Tensor<T>> out;
    for (const auto& e : entries_) out.emplace(e.name, e.var.value());
    return out;
  }

 private:
  std::vector<NamedParameter<T>> entries_;
  std::map<std::string, std::size_t> index_;
};

/// Truncated normal (resampled outside +-2 std).
template <typename T>
Tensor<T> trunc_normal(Shape shape, double std_dev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Tensor<T> t(std::move(shape));
  for (auto& v : t.values()) {
    double z;
    do {
      z = dist(rng);
    } while (std::abs(z) > 2.0);
    v = static_cast<T>(z * std_dev);
  }
  return t;
}

/// Kaiming-uniform with ReLU gain: U(-sqrt(6/fan_in), sqrt(6/fan_in)).
template <typename T>
Tensor<T> kaiming_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor<T> t(std::move(shape));
  for (auto& v : t.values()) v = static_cast<T>(dist(rng));
  return t;
}

template <typename T>
Tensor<T> uniform(Shape shape, double lo, double hi, Rng& rng) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor<T> t(std::move(shape));
  for (auto& v : t.values()) v = static_cast<T>(dist(rng));
  return t;
}

}  // namespace unict::tensor
