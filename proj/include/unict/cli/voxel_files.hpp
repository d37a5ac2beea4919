#pragma once

#include <filesystem>

#include "unict/events/voxel_grid.hpp"

namespace unict::cli {

/// Window parameters stored next to a voxel file; enough to rebuild it.
struct VoxelSidecar {
  double t0 = 0.0;
  double duration = 0.0;
  std::size_t bins = 0, height = 0, width = 0;
  std::size_t events = 0;
};

/// Writes `<stem>.f32` (raw little-endian float32, B x H x W row-major) and
/// `<stem>.json`.
void write_voxel(const std::filesystem::path& stem, const events::VoxelGrid& grid,
                 const VoxelSidecar& meta);

/// Reads a `.f32` file using the sidecar `.json` with the same stem.
events::VoxelGrid read_voxel(const std::filesystem::path& f32_path, VoxelSidecar* meta = nullptr);

}  // namespace unict::cli
