#include "unict/tensor/optim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace unict::tensor {

template <typename T>
AdamW<T>::AdamW(ParameterStore<T>& params, AdamWOptions options)
    : params_(params), options_(options) {
  for (const auto& e : params_.entries()) {
    m_.emplace_back(e.var.size(), 0.0);
    v_.emplace_back(e.var.size(), 0.0);
  }
}

template <typename T>
void AdamW<T>::step() {
  if (m_.size() != params_.size()) {
    throw std::logic_error("AdamW: parameter store changed after optimizer construction");
  }
  ++step_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  const double lr = options_.lr;
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Var<T> var = params_.entries()[k].var;
    if (!var.has_grad()) continue;
    const T* g = var.grad().data();
    T* p = var.mutable_value().data();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < var.size(); ++i) {
      const double gi = static_cast<double>(g[i]);
      m[i] = b1 * m[i] + (1.0 - b1) * gi;
      v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
      const double update =
          lr * options_.weight_decay * static_cast<double>(p[i]) +
          lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + options_.eps);
      p[i] = static_cast<T>(static_cast<double>(p[i]) - update);
    }
  }
}

MultiStepLR::MultiStepLR(double base_lr, std::vector<int> milestones, double factor)
    : base_(base_lr), milestones_(std::move(milestones)), factor_(factor) {
  for (std::size_t i = 1; i < milestones_.size(); ++i) {
    if (milestones_[i] <= milestones_[i - 1]) {
      throw std::invalid_argument("MultiStepLR: milestones must be strictly increasing");
    }
  }
}

double MultiStepLR::lr_at(int epoch) const {
  const auto passed = std::count_if(milestones_.begin(), milestones_.end(),
                                    [epoch](int m) { return m <= epoch; });
  return base_ * std::pow(factor_, static_cast<double>(passed));
}

template class AdamW<float>;
template class AdamW<double>;

}  // namespace unict::tensor
