#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace unict::attention {

/// Invalid block or network configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class BranchKind { kConvolution, kDense, kWindow, kChannelGroup };

std::string to_string(BranchKind kind);
BranchKind branch_kind_from_string(const std::string& name);

/// Which operator sits in each of the two parallel branches and whether the
/// spatial gate multiplies it. The default is the full block.
struct BlockVariant {
  BranchKind first = BranchKind::kChannelGroup;
  BranchKind second = BranchKind::kWindow;
  bool gate_first = true;
  bool gate_second = true;

  bool uses_gate() const { return gate_first || gate_second; }
  bool operator==(const BlockVariant&) const = default;
};

struct BlockConfig {
  std::size_t channels = 64;
  std::size_t heads = 2;
  /// Window size in patches (P_w = window_h * window_w).
  std::size_t window_h = 7;
  std::size_t window_w = 7;
  /// Channels per group for the channel-group attention (C_g).
  std::size_t group_channels = 16;
  std::size_t mlp_ratio = 4;

  std::size_t head_channels() const { return channels / heads; }
  std::size_t groups() const { return channels / group_channels; }
  std::size_t window_tokens() const { return window_h * window_w; }

  /// Checks C = N_h*C_h and C = N_g*C_g.
  void validate() const;
  /// Also checks that a grid_h x grid_w token grid tiles into whole windows.
  void validate(std::size_t grid_h, std::size_t grid_w) const;
  std::size_t window_count(std::size_t grid_h, std::size_t grid_w) const;

  bool operator==(const BlockConfig&) const = default;
};

/// Largest divisor of `grid` that does not exceed `requested`.
std::size_t fit_window(std::size_t requested, std::size_t grid);

}  // namespace unict::attention
