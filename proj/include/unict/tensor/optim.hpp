#pragma once

#include <cstddef>
#include <vector>

#include "unict/tensor/parameters.hpp"

namespace unict::tensor {

struct AdamWOptions {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-2;
};

/// Decoupled-weight-decay Adam over a ParameterStore. Moment buffers follow
/// the store's registration order.
template <typename T>
class AdamW {
 public:
  AdamW(ParameterStore<T>& params, AdamWOptions options);

  /// Applies one update from the currently accumulated gradients.
  /// Parameters without a gradient are skipped.
  void step();
  void set_lr(double lr) { options_.lr = lr; }
  double lr() const { return options_.lr; }
  std::size_t steps() const { return step_; }
  const AdamWOptions& options() const { return options_; }

 private:
  ParameterStore<T>& params_;
  AdamWOptions options_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::size_t step_ = 0;
};

/// Piecewise-constant schedule: base * factor^(milestones <= epoch), epochs
/// counted from 0.
class MultiStepLR {
 public:
  MultiStepLR(double base_lr, std::vector<int> milestones, double factor);
  double lr_at(int epoch) const;
  const std::vector<int>& milestones() const { return milestones_; }
  double factor() const { return factor_; }

 private:
  double base_;
  std::vector<int> milestones_;
  double factor_;
};

}  // namespace unict::tensor
