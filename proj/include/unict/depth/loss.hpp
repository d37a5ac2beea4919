#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "unict/depth/config.hpp"
#include "unict/tensor/ops.hpp"

namespace unict::depth {

using tensor::Tensor;
using tensor::Var;

/// Metric depth [1 x H x W] plus a per-pixel validity mask.
struct DepthFrame {
  Tensor<float> depth;
  std::vector<std::uint8_t> valid;

  std::size_t height() const { return depth.dim(1); }
  std::size_t width() const { return depth.dim(2); }
  std::size_t valid_count() const;

  /// Mask is set where the depth is finite and in (0, 80] m.
  static DepthFrame from_ground_truth(Tensor<float> depth);
  /// Mask all-true.
  static DepthFrame from_prediction(Tensor<float> depth);
};

class LossError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Sum over valid pixels of l1*|R| + l2*R^2 with R = gt - pred. pred is
/// [1 x H x W]. Values at invalid pixels never reach the result.
template <typename T>
Var<T> masked_loss_sum(const Var<T>& pred, const DepthFrame& gt, const LossWeights& w);

/// masked_loss_sum divided by the valid count; throws LossError if it is 0.
template <typename T>
Var<T> depth_loss(const Var<T>& pred, const DepthFrame& gt, const LossWeights& w);

/// Same quantity evaluated on plain frames (mask taken from gt).
double depth_loss(const DepthFrame& pred, const DepthFrame& gt, const LossWeights& w);

}  // namespace unict::depth
