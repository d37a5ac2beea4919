#pragma once

#include <algorithm>
#include <optional>
#include <string>

#include "unict/attention/attention.hpp"
#include "unict/attention/config.hpp"
#include "unict/nn/layers.hpp"

namespace unict::attention {

using tensor::ParameterStore;
using tensor::Rng;
using tensor::Tensor;

template <typename T>
struct TokenMap {
  Var<T> tokens;  // [P x C]
  std::size_t grid_h = 0;
  std::size_t grid_w = 0;

  std::size_t count() const { return grid_h * grid_w; }
  std::size_t channels() const { return tokens.dim(1); }
};

/// Spatial gate: channel max/mean -> 7x7 conv -> sigmoid, multiplied into
/// the input, then 3x3 conv + ReLU and 3x3 conv + sigmoid down to one
/// channel. Output [1 x H x W] in (0, 1).
template <typename T>
struct DetailGate {
  nn::Conv2d<T> spatial;
  nn::Conv2d<T> reduce;
  nn::Conv2d<T> project;

  DetailGate() = default;
  DetailGate(ParameterStore<T>& store, const std::string& name, std::size_t channels, Rng& rng);

  static std::size_t hidden_channels(std::size_t channels) {
    return std::max<std::size_t>(1, channels / 4);
  }
  Var<T> operator()(const Var<T>& x) const;
};

/// One of the two parallel operators inside the dual block.
template <typename T>
class Branch {
 public:
  Branch() = default;
  Branch(ParameterStore<T>& store, const std::string& name, BranchKind kind,
         const BlockConfig& cfg, Rng& rng);

  BranchKind kind() const { return kind_; }
  /// tokens [P x C] on a grid_h x grid_w grid -> [P x C].
  Var<T> operator()(const Var<T>& tokens, std::size_t grid_h, std::size_t grid_w) const;

 private:
  BranchKind kind_ = BranchKind::kWindow;
  BlockConfig cfg_;
  nn::Linear<T> qkv_;
  nn::Conv2d<T> conv_;
};

/// Pre-norm dual-branch block: x + merge(concat(b1(LN x) * g, b2(LN x) * g))
/// followed by x + MLP(LN x). The gate g is one spatial map shared by both
/// branches, computed from the block input.
template <typename T>
class DualAttentionBlock {
 public:
  DualAttentionBlock() = default;
  DualAttentionBlock(ParameterStore<T>& store, const std::string& name, const BlockConfig& cfg,
                     const BlockVariant& variant, Rng& rng);

  TokenMap<T> operator()(const TokenMap<T>& x) const;

  /// Residual attention part only. `gate_override` ([1 x h x w]) replaces
  /// the computed gate for every branch the variant gates.
  Var<T> attention_unit(const TokenMap<T>& x,
                        const std::optional<Tensor<T>>& gate_override = std::nullopt) const;

  /// Gate map [1 x h x w] for input x; undefined when the variant has none.
  Var<T> gate(const TokenMap<T>& x) const;

  const BlockConfig& config() const { return cfg_; }
  const BlockVariant& variant() const { return variant_; }
  const nn::LayerNorm<T>& norm1() const { return norm1_; }
  const Branch<T>& first() const { return first_; }
  const Branch<T>& second() const { return second_; }
  const nn::Linear<T>& merge() const { return merge_; }

 private:
  BlockConfig cfg_;
  BlockVariant variant_;
  nn::LayerNorm<T> norm1_, norm2_;
  Branch<T> first_, second_;
  DetailGate<T> gate_;
  nn::Linear<T> merge_;
  nn::Linear<T> fc1_, fc2_;
};

/// 3x3 stride-2 conv to `channels`, flattened to tokens, plus a learned
/// positional embedding for a fixed output grid.
template <typename T>
class PatchEmbed {
 public:
  PatchEmbed() = default;
  PatchEmbed(ParameterStore<T>& store, const std::string& name, std::size_t in_channels,
             std::size_t channels, std::size_t grid_h, std::size_t grid_w, Rng& rng);

  /// x [C_in x 2*grid_h x 2*grid_w]; throws ShapeError on odd or mismatched dims.
  TokenMap<T> operator()(const Var<T>& x) const;

  const Var<T>& position() const { return pos_; }

 private:
  nn::Conv2d<T> conv_;
  Var<T> pos_;
  std::size_t grid_h_ = 0, grid_w_ = 0;
};

/// Patch embedding then one dual block; [C_in x H x W] -> [C x H/2 x W/2].
/// The configured window is shrunk to the largest divisor of the token grid
/// so any even input size works.
template <typename T>
class HybridStage {
 public:
  HybridStage() = default;
  HybridStage(ParameterStore<T>& store, const std::string& name, std::size_t in_channels,
              std::size_t in_h, std::size_t in_w, const BlockConfig& cfg,
              const BlockVariant& variant, Rng& rng);

  Var<T> operator()(const Var<T>& x) const;

  const BlockConfig& config() const { return block_.config(); }
  const PatchEmbed<T>& embed() const { return embed_; }
  const DualAttentionBlock<T>& block() const { return block_; }

 private:
  PatchEmbed<T> embed_;
  DualAttentionBlock<T> block_;
};

}  // namespace unict::attention
