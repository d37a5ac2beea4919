#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "unict/tensor/parameters.hpp"

namespace unict::tensor {

struct GradCheckOptions {
  double epsilon = 1e-5;
  double tolerance = 1e-4;
  /// 0 checks every entry; otherwise a seeded random subset per parameter.
  std::size_t max_entries_per_param = 0;
  /// Lower bound on the gradient scale used to normalise errors, so that a
  /// parameter whose true gradient is zero is judged on absolute error.
  double scale_floor = 0.0;
  std::uint64_t seed = 7;
};

struct GradCheckEntry {
  std::string name;
  std::size_t checked = 0;
  double max_abs_error = 0.0;
  /// max_i |analytic_i - numeric_i| / max(|analytic|_inf, |numeric|_inf).
  double rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed() const { return max_rel_error < tolerance; }
  std::string summary() const;
};

/// Compares reverse-mode gradients of a scalar objective against central
/// differences. `objective` must rebuild the graph from the current parameter
/// values on every call. The error is normwise per parameter tensor, so
/// entries with vanishing gradients are judged against the tensor's scale.
/// Throws NumericError on a non-finite analytic or numeric gradient.
GradCheckReport grad_check(const std::function<Var<double>()>& objective,
                           const std::vector<NamedParameter<double>>& params,
                           const GradCheckOptions& options = {});

}  // namespace unict::tensor
