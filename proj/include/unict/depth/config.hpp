#pragma once

#include <array>
#include <cstddef>
#include <string>

#include "unict/attention/config.hpp"

namespace unict::depth {

using attention::ConfigError;

enum class Modality { kFusion, kEventsOnly, kImageOnly };

std::string to_string(Modality m);
Modality modality_from_string(const std::string& name);

struct LossWeights {
  double l1 = 1.0;
  double l2 = 1.0;
  bool operator==(const LossWeights&) const = default;
};

struct NetConfig {
  std::size_t height = 224;
  std::size_t width = 224;
  std::size_t time_bins = 5;

  // Preprocessor: per-modality conv widths and the fused output width.
  std::size_t event_channels = 16;
  std::size_t image_channels = 16;
  std::size_t stem_channels = 32;

  // Residual output then the four attention stages, at 1/2 ... 1/32.
  std::array<std::size_t, 5> encoder_channels = {64, 96, 192, 384, 768};
  std::array<std::size_t, 4> heads = {2, 4, 8, 16};
  std::size_t window = 7;
  std::size_t group_channels = 16;
  std::size_t mlp_ratio = 4;
  // Decoder outputs at 1/16 ... 1/1.
  std::array<std::size_t, 5> decoder_channels = {384, 192, 96, 64, 32};

  Modality modality = Modality::kFusion;
  attention::BlockVariant block;
  LossWeights loss;
  /// The depth head starts out predicting this many meters everywhere.
  double initial_depth = 10.0;

  void validate() const;
  /// Attention stage i (0..3) before window fitting.
  attention::BlockConfig stage_config(std::size_t i) const;

  /// Small widths for CPU training runs and tests.
  static NetConfig tiny(std::size_t height, std::size_t width);

  bool operator==(const NetConfig&) const = default;
};

}  // namespace unict::depth
