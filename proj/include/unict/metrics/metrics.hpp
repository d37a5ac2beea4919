#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>

namespace unict::metrics {

inline constexpr double kMaxDepth = 80.0;
inline constexpr double kMinLogDepth = 0.01;
inline constexpr std::array<double, 3> kCutoffs = {10.0, 20.0, 30.0};

class MetricError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Ground truth is usable when finite and inside (0, 80] m.
inline bool valid_depth(double gt) { return gt > 0.0 && gt <= kMaxDepth; }

// Single-frame metrics over valid pixels. pred and gt must have equal size;
// a non-finite prediction on a valid pixel throws MetricError, as does an
// empty pixel set. Log and ratio metrics clamp pred into [0.01, 80].
template <typename T>
double avg_error(std::span<const T> pred, std::span<const T> gt, double cutoff);
template <typename T>
double abs_rel(std::span<const T> pred, std::span<const T> gt);
template <typename T>
double rmse_log(std::span<const T> pred, std::span<const T> gt);
/// Fraction of valid pixels with max(pred/gt, gt/pred) < 1.25^n.
template <typename T>
double delta_acc(std::span<const T> pred, std::span<const T> gt, int n);

struct MetricReport {
  std::array<double, 3> avg_error{};  // at kCutoffs; NaN when no pixel qualifies
  std::array<std::size_t, 3> avg_error_n{};
  double abs_rel = 0;
  double rmse_log = 0;
  std::array<double, 3> delta{};
  std::size_t n_valid = 0;

  std::string to_json() const;
  /// Aligned table: cutoff errors, then Abs Rel, RMSE log, delta 1..3.
  std::string to_table() const;
};

/// Pixel-weighted accumulator across frames: each metric is the sum of its
/// per-pixel terms over all frames divided by the total pixel count.
class MetricAccumulator {
 public:
  template <typename T>
  void add(std::span<const T> pred, std::span<const T> gt);
  void merge(const MetricAccumulator& other);
  MetricReport report() const;
  std::size_t frames() const { return frames_; }

 private:
  std::array<double, 3> abs_err_{};
  std::array<std::size_t, 3> abs_n_{};
  double rel_ = 0, log_sq_ = 0;
  std::array<std::size_t, 3> within_{};
  std::size_t n_ = 0, frames_ = 0;
};

template <typename T>
MetricReport evaluate(std::span<const T> pred, std::span<const T> gt) {
  MetricAccumulator acc;
  acc.add(pred, gt);
  return acc.report();
}

}  // namespace unict::metrics
