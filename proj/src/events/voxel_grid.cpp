#include "unict/events/voxel_grid.hpp"

#include <cmath>
#include <string>

namespace unict::events {

std::int8_t normalize_polarity(long raw) {
  switch (raw) {
    case 1:
      return 1;
    case 0:
    case -1:
      return -1;
    default:
      throw EventError("polarity " + std::to_string(raw) + " is not one of -1, 0, 1");
  }
}

double VoxelGrid::total() const {
  double acc = 0.0;
  for (double v : data.values()) acc += v;
  return acc;
}

double scale_timestamp(double t, double t0, double duration, std::size_t bins) {
  if (!(duration > 0.0)) throw EventError("window duration must be positive");
  if (bins == 0) throw EventError("number of time bins must be positive");
  if (t < t0 || t > t0 + duration) {
    throw EventError("timestamp " + std::to_string(t) + " outside window [" + std::to_string(t0) +
                     ", " + std::to_string(t0 + duration) + "]");
  }
  const double scaled = static_cast<double>(bins - 1) * (t - t0) / duration;
  // Guards rounding at the closed upper edge.
  return std::min(scaled, static_cast<double>(bins - 1));
}

VoxelGrid voxelize(const EventSlice& slice, std::size_t height, std::size_t width,
                   std::size_t bins) {
  VoxelGrid grid{tensor::Tensor<double>(tensor::Shape{bins, height, width}), bins, height, width};
  const std::size_t plane = height * width;
  double* v = grid.data.data();
  for (const auto& e : slice.events) {
    if (e.x >= width || e.y >= height) {
      throw EventError("event at (" + std::to_string(e.x) + ", " + std::to_string(e.y) +
                       ") outside " + std::to_string(width) + "x" + std::to_string(height) +
                       " grid");
    }
    const double ts = scale_timestamp(e.t, slice.t0, slice.duration, bins);
    const auto lower = static_cast<std::size_t>(std::floor(ts));
    const std::size_t pixel = static_cast<std::size_t>(e.y) * width + e.x;
    for (std::size_t b = lower; b <= lower + 1 && b < bins; ++b) {
      const double w = std::max(0.0, 1.0 - std::abs(static_cast<double>(b) - ts));
      if (w > 0.0) v[b * plane + pixel] += e.p * w;
    }
  }
  return grid;
}

}  // namespace unict::events
