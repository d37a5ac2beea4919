#pragma once

#include <cstddef>

#include "unict/events/event.hpp"
#include "unict/tensor/tensor.hpp"

namespace unict::events {

inline constexpr std::size_t kDefaultTimeBins = 5;

/// Spatio-temporal event volume, stored bins-first (B x H x W) so that each
/// temporal bin is a contiguous image plane.
struct VoxelGrid {
  tensor::Tensor<double> data;
  std::size_t bins = 0;
  std::size_t height = 0;
  std::size_t width = 0;

  double at(std::size_t b, std::size_t y, std::size_t x) const { return data.at(b, y, x); }
  double total() const;

  template <typename T>
  tensor::Tensor<T> as() const {
    return data.cast<T>();
  }
};

/// Normalized timestamp t* = (B - 1)(t - t0) / duration, in [0, B - 1].
/// Throws EventError when duration <= 0 or t lies outside the window.
double scale_timestamp(double t, double t0, double duration, std::size_t bins);

/// Accumulates each event into its pixel with the temporal triangle kernel
/// max(0, 1 - |b - t*|): at most two adjacent bins receive weight. Throws
/// EventError on out-of-range coordinates or timestamps.
VoxelGrid voxelize(const EventSlice& slice, std::size_t height, std::size_t width,
                   std::size_t bins = kDefaultTimeBins);

}  // namespace unict::events
