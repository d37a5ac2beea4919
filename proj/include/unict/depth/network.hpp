#pragma once

#include <array>
#include <filesystem>
#include <vector>

#include "unict/attention/blocks.hpp"
#include "unict/depth/config.hpp"
#include "unict/depth/loss.hpp"
#include "unict/events/voxel_grid.hpp"
#include "unict/nn/layers.hpp"

namespace unict::depth {

using tensor::ParameterStore;
using tensor::Rng;

/// conv3x3(stride) -> GN -> ReLU -> conv3x3 -> GN, plus a 1x1 projection
/// shortcut when the shape changes, then ReLU.
template <typename T>
struct ResidualBlock {
  nn::Conv2d<T> conv1, conv2, shortcut;
  nn::GroupNorm<T> norm1, norm2;
  bool project = false;

  ResidualBlock() = default;
  ResidualBlock(ParameterStore<T>& store, const std::string& name, std::size_t in,
                std::size_t out, std::size_t stride, Rng& rng);
  Var<T> operator()(const Var<T>& x) const;
};

/// Doubles resolution, concatenates the skip feature, then conv3x3 -> GN -> ReLU.
template <typename T>
struct DecoderBlock {
  nn::Upsample2x<T> up;
  nn::Conv2d<T> fuse;
  nn::GroupNorm<T> norm;

  DecoderBlock() = default;
  DecoderBlock(ParameterStore<T>& store, const std::string& name, std::size_t in,
               std::size_t skip, std::size_t out, Rng& rng);
  /// An undefined `skip` is replaced by zeros of the expected width.
  Var<T> operator()(const Var<T>& x, const Var<T>& skip, std::size_t skip_channels) const;
};

/// Encoder outputs: the full-resolution preprocessor map followed by the
/// five downsampled features at 1/2 ... 1/32.
template <typename T>
struct Features {
  Var<T> full;
  std::array<Var<T>, 5> scales;
};

template <typename T>
class DepthNet {
 public:
  DepthNet(const NetConfig& cfg, std::uint64_t seed);
  DepthNet(const DepthNet&) = delete;
  DepthNet& operator=(const DepthNet&) = delete;

  /// voxel [B x H x W], image [3 x H x W] -> [stem x H x W]. The input of a
  /// disabled modality is ignored and may be undefined.
  Var<T> preprocess(const Var<T>& voxel, const Var<T>& image) const;
  Features<T> encode(const Var<T>& stem) const;
  /// Positive depth [1 x H x W]. Clearing skips[i] feeds zeros in place of
  /// the skip for decoder block i (0 = deepest). `trace` receives each
  /// decoder block's output.
  Var<T> decode(const Features<T>& f,
                std::array<bool, 5> skips = {true, true, true, true, true},
                std::array<Var<T>, 5>* trace = nullptr) const;
  Var<T> forward(const Var<T>& voxel, const Var<T>& image) const;

  /// No-grad forward, clamped to [0, 80] m, mask all-true.
  DepthFrame infer(const Tensor<T>& voxel, const Tensor<T>& image) const;
  DepthFrame infer(const events::VoxelGrid& voxel, const Tensor<T>& image) const;

  void save(const std::filesystem::path& path) const;
  void load(const std::filesystem::path& path);

  const NetConfig& config() const { return cfg_; }
  ParameterStore<T>& parameters() { return store_; }
  const ParameterStore<T>& parameters() const { return store_; }

 private:
  void check_inputs(const Var<T>& voxel, const Var<T>& image) const;

  NetConfig cfg_;
  ParameterStore<T> store_;
  nn::Conv2d<T> event_conv_, image_conv_, merge_conv_;
  ResidualBlock<T> res1_, res2_;
  std::array<attention::HybridStage<T>, 4> stages_;
  std::array<DecoderBlock<T>, 5> decoder_;
  nn::Conv2d<T> head_;
};

}  // namespace unict::depth
