#include "unict/attention/config.hpp"

#include <algorithm>

namespace unict::attention {

std::string to_string(BranchKind kind) {
  switch (kind) {
    case BranchKind::kConvolution: return "conv";
    case BranchKind::kDense: return "dense";
    case BranchKind::kWindow: return "window";
    case BranchKind::kChannelGroup: return "channel";
  }
  return "?";
}

BranchKind branch_kind_from_string(const std::string& name) {
  if (name == "conv") return BranchKind::kConvolution;
  if (name == "dense") return BranchKind::kDense;
  if (name == "window") return BranchKind::kWindow;
  if (name == "channel") return BranchKind::kChannelGroup;
  throw ConfigError("unknown branch kind '" + name + "' (expected conv, dense, window or channel)");
}

void BlockConfig::validate() const {
  if (channels == 0) throw ConfigError("channels must be positive");
  if (heads == 0 || channels % heads != 0) {
    throw ConfigError("channels (" + std::to_string(channels) + ") not divisible by heads (" +
                      std::to_string(heads) + ")");
  }
  if (group_channels == 0 || channels % group_channels != 0) {
    throw ConfigError("channels (" + std::to_string(channels) +
                      ") not divisible by group_channels (" + std::to_string(group_channels) + ")");
  }
  if (window_h == 0 || window_w == 0) throw ConfigError("window must be positive");
  if (mlp_ratio == 0) throw ConfigError("mlp_ratio must be positive");
}

void BlockConfig::validate(std::size_t grid_h, std::size_t grid_w) const {
  validate();
  if (grid_h % window_h != 0 || grid_w % window_w != 0) {
    throw ConfigError("token grid " + std::to_string(grid_h) + "x" + std::to_string(grid_w) +
                      " not divisible by window " + std::to_string(window_h) + "x" +
                      std::to_string(window_w));
  }
}

std::size_t BlockConfig::window_count(std::size_t grid_h, std::size_t grid_w) const {
  validate(grid_h, grid_w);
  return (grid_h / window_h) * (grid_w / window_w);
}

std::size_t fit_window(std::size_t requested, std::size_t grid) {
  if (requested == 0 || grid == 0) throw ConfigError("window and grid must be positive");
  for (std::size_t w = std::min(requested, grid); w > 1; --w) {
    if (grid % w == 0) return w;
  }
  return 1;
}

}  // namespace unict::attention
