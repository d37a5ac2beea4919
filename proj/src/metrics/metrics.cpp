#include "unict/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "json.hpp"

namespace unict::metrics {

namespace {

template <typename T>
void check_sizes(std::span<const T> pred, std::span<const T> gt) {
  if (pred.size() != gt.size()) {
    throw MetricError("prediction has " + std::to_string(pred.size()) +
                      " pixels, ground truth " + std::to_string(gt.size()));
  }
}

double checked_pred(double p, std::size_t i) {
  if (!std::isfinite(p)) {
    throw MetricError("non-finite prediction at pixel " + std::to_string(i));
  }
  return p;
}

double clamp_log(double p) { return std::clamp(p, kMinLogDepth, kMaxDepth); }

double threshold(int n) { return std::pow(1.25, n); }

// Calls f(pred, gt) for each valid pixel; returns how many.
template <typename T, typename F>
std::size_t for_valid(std::span<const T> pred, std::span<const T> gt, F&& f) {
  check_sizes(pred, gt);
  std::size_t n = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const double g = gt[i];
    if (!valid_depth(g)) continue;
    f(checked_pred(pred[i], i), g);
    ++n;
  }
  return n;
}

void require_pixels(std::size_t n, const char* what) {
  if (n == 0) throw MetricError(std::string(what) + ": no valid pixels");
}

}  // namespace

template <typename T>
double avg_error(std::span<const T> pred, std::span<const T> gt, double cutoff) {
  double sum = 0;
  std::size_t n = 0;
  for_valid(pred, gt, [&](double p, double g) {
    if (g <= cutoff) {
      sum += std::abs(p - g);
      ++n;
    }
  });
  if (n == 0) {
    throw MetricError("avg_error: no valid pixels within " + std::to_string(cutoff) + " m");
  }
  return sum / double(n);
}

template <typename T>
double abs_rel(std::span<const T> pred, std::span<const T> gt) {
  double sum = 0;
  auto n = for_valid(pred, gt, [&](double p, double g) { sum += std::abs(p - g) / g; });
  require_pixels(n, "abs_rel");
  return sum / double(n);
}

template <typename T>
double rmse_log(std::span<const T> pred, std::span<const T> gt) {
  double sum = 0;
  auto n = for_valid(pred, gt, [&](double p, double g) {
    const double d = std::log(clamp_log(p)) - std::log(g);
    sum += d * d;
  });
  require_pixels(n, "rmse_log");
  return std::sqrt(sum / double(n));
}

template <typename T>
double delta_acc(std::span<const T> pred, std::span<const T> gt, int n) {
  if (n < 1) throw MetricError("delta_acc: n must be >= 1");
  const double thr = threshold(n);
  std::size_t hit = 0;
  auto count = for_valid(pred, gt, [&](double p, double g) {
    p = clamp_log(p);
    if (std::max(p / g, g / p) < thr) ++hit;
  });
  require_pixels(count, "delta_acc");
  return double(hit) / double(count);
}

template <typename T>
void MetricAccumulator::add(std::span<const T> pred, std::span<const T> gt) {
  n_ += for_valid(pred, gt, [&](double p, double g) {
    const double err = std::abs(p - g);
    for (std::size_t c = 0; c < kCutoffs.size(); ++c) {
      if (g <= kCutoffs[c]) {
        abs_err_[c] += err;
        ++abs_n_[c];
      }
    }
    rel_ += err / g;
    const double pc = clamp_log(p);
    const double d = std::log(pc) - std::log(g);
    log_sq_ += d * d;
    const double ratio = std::max(pc / g, g / pc);
    for (int k = 0; k < 3; ++k) {
      if (ratio < threshold(k + 1)) ++within_[k];
    }
  });
  ++frames_;
}

void MetricAccumulator::merge(const MetricAccumulator& o) {
  for (std::size_t c = 0; c < 3; ++c) {
    abs_err_[c] += o.abs_err_[c];
    abs_n_[c] += o.abs_n_[c];
    within_[c] += o.within_[c];
  }
  rel_ += o.rel_;
  log_sq_ += o.log_sq_;
  n_ += o.n_;
  frames_ += o.frames_;
}

MetricReport MetricAccumulator::report() const {
  constexpr double nan = std::numeric_limits<double>::quiet_NaN();
  MetricReport r;
  for (std::size_t c = 0; c < 3; ++c) {
    r.avg_error[c] = abs_n_[c] ? abs_err_[c] / double(abs_n_[c]) : nan;
    r.avg_error_n[c] = abs_n_[c];
  }
  r.n_valid = n_;
  if (n_ == 0) {
    r.abs_rel = r.rmse_log = nan;
    r.delta = {nan, nan, nan};
    return r;
  }
  r.abs_rel = rel_ / double(n_);
  r.rmse_log = std::sqrt(log_sq_ / double(n_));
  for (std::size_t k = 0; k < 3; ++k) r.delta[k] = double(within_[k]) / double(n_);
  return r;
}

std::string MetricReport::to_json() const {
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); };
  nlohmann::json j;
  for (std::size_t c = 0; c < 3; ++c) {
    const std::string key = "avg_error_" + std::to_string(int(kCutoffs[c]));
    j[key] = num(avg_error[c]);
    j[key + "_n"] = avg_error_n[c];
  }
  j["abs_rel"] = num(abs_rel);
  j["rmse_log"] = num(rmse_log);
  j["d1"] = num(delta[0]);
  j["d2"] = num(delta[1]);
  j["d3"] = num(delta[2]);
  j["n_valid"] = n_valid;
  return j.dump();
}

std::string MetricReport::to_table() const {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "%9s %9s %9s | %9s %9s %9s %9s %9s\n"
                "%9.4f %9.4f %9.4f | %9.4f %9.4f %9.4f %9.4f %9.4f\n",
                "err@10m", "err@20m", "err@30m", "AbsRel", "RMSElog", "d<1.25", "d<1.25^2",
                "d<1.25^3", avg_error[0], avg_error[1], avg_error[2], abs_rel, rmse_log, delta[0],
                delta[1], delta[2]);
  return buf;
}

#define UNICT_INSTANTIATE(T)                                                          \
  template double avg_error(std::span<const T>, std::span<const T>, double);          \
  template double abs_rel(std::span<const T>, std::span<const T>);                    \
  template double rmse_log(std::span<const T>, std::span<const T>);                   \
  template double delta_acc(std::span<const T>, std::span<const T>, int);             \
  template void MetricAccumulator::add(std::span<const T>, std::span<const T>);

UNICT_INSTANTIATE(float)
UNICT_INSTANTIATE(double)

}  // namespace unict::metrics
