#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>

#include "unict/tensor/tensor.hpp"

namespace unict::io {

using tensor::Tensor;

class ImageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Single-channel float map [1 x H x W] as little-endian PFM ("Pf", scale -1,
/// rows stored bottom to top).
void write_pfm(const std::filesystem::path& path, const Tensor<float>& map);
Tensor<float> read_pfm(const std::filesystem::path& path);

/// 8-bit binary PGM. Values in [0, 1] are quantised with rounding.
void write_pgm(const std::filesystem::path& path, const Tensor<float>& image);
/// Returns [1 x H x W] in [0, 1].
Tensor<float> read_pgm(const std::filesystem::path& path);

/// Turbo-style colour for t in [0, 1] (clamped).
std::array<std::uint8_t, 3> turbo(double t);

/// RGB PNG of a depth map, colour-mapped over [lo, hi] metres. Non-finite
/// pixels are written black.
void write_depth_png(const std::filesystem::path& path, const Tensor<float>& depth,
                     double lo = 0.0, double hi = 30.0);

}  // namespace unict::io
