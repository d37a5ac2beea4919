#include "unict/tensor/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace unict::tensor {

std::string GradCheckReport::summary() const {
  std::ostringstream os;
  os << "grad_check: " << entries.size() << " parameters, max rel error " << max_rel_error
     << " (tol " << tolerance << ")";
  for (const auto& e : entries) {
    if (e.rel_error >= tolerance) {
      os << "\n  FAIL " << e.name << " rel " << e.rel_error << " abs " << e.max_abs_error;
    }
  }
  return os.str();
}

GradCheckReport grad_check(const std::function<Var<double>()>& objective,
                           const std::vector<NamedParameter<double>>& params,
                           const GradCheckOptions& options) {
  GradCheckReport report;
  report.tolerance = options.tolerance;

  auto eval = [&]() {
    NoGradGuard guard;
    Var<double> out = objective();
    if (out.size() != 1) throw ShapeError("grad_check: objective must be a scalar");
    return out.value()[0];
  };

  for (const auto& p : params) p.var.node()->grad = Tensor<double>();
  Var<double> root = objective();
  if (root.size() != 1) throw ShapeError("grad_check: objective must be a scalar");
  backward(root);

  Rng rng(options.seed);
  for (const auto& p : params) {
    Var<double> var = p.var;
    Tensor<double> analytic =
        var.has_grad() ? var.grad() : Tensor<double>(var.shape());
    if (!analytic.all_finite()) {
      throw NumericError("grad_check: non-finite analytic gradient for " + p.name);
    }

    std::vector<std::size_t> idx(var.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (options.max_entries_per_param > 0 && idx.size() > options.max_entries_per_param) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(options.max_entries_per_param);
      std::sort(idx.begin(), idx.end());
    }

    GradCheckEntry entry;
    entry.name = p.name;
    double scale = 0.0;
    for (double g : analytic.values()) scale = std::max(scale, std::abs(g));
    double* values = var.mutable_value().data();
    for (std::size_t i : idx) {
      const double orig = values[i];
      values[i] = orig + options.epsilon;
      const double up = eval();
      values[i] = orig - options.epsilon;
      const double down = eval();
      values[i] = orig;
      const double numeric = (up - down) / (2.0 * options.epsilon);
      if (!std::isfinite(numeric)) {
        throw NumericError("grad_check: non-finite numeric gradient for " + p.name);
      }
      scale = std::max(scale, std::abs(numeric));
      entry.max_abs_error = std::max(entry.max_abs_error, std::abs(numeric - analytic[i]));
      ++entry.checked;
    }
    scale = std::max(scale, options.scale_floor);
    entry.rel_error = scale > 0.0 ? entry.max_abs_error / scale : 0.0;
    report.max_rel_error = std::max(report.max_rel_error, entry.rel_error);
    report.entries.push_back(entry);
  }
  return report;
}

}  // namespace unict::tensor
