#include "unict/attention/blocks.hpp"

namespace unict::attention {

using tensor::Shape;
using tensor::ShapeError;

template <typename T>
DetailGate<T>::DetailGate(ParameterStore<T>& store, const std::string& name,
                          std::size_t channels, Rng& rng)
    : spatial(store, name + ".spatial", 2, 1, 7, 1, 3, rng),
      reduce(store, name + ".reduce", channels, hidden_channels(channels), 3, 1, 1, rng),
      project(store, name + ".project", hidden_channels(channels), 1, 3, 1, 1, rng) {}

template <typename T>
Var<T> DetailGate<T>::operator()(const Var<T>& x) const {
  if (x.rank() != 3) {
    throw ShapeError("gate input must be [C x H x W], got " + tensor::to_string(x.shape()));
  }
  auto pooled = tensor::concat<T>({tensor::channel_max(x), tensor::channel_mean(x)}, 0);
  auto attn = tensor::sigmoid(spatial(pooled));
  auto gated = x * tensor::broadcast_to(attn, x.shape());
  return tensor::sigmoid(project(tensor::relu(reduce(gated))));
}

template <typename T>
Branch<T>::Branch(ParameterStore<T>& store, const std::string& name, BranchKind kind,
                  const BlockConfig& cfg, Rng& rng)
    : kind_(kind), cfg_(cfg) {
  cfg.validate();
  if (kind == BranchKind::kConvolution) {
    conv_ = nn::Conv2d<T>(store, name + ".conv", cfg.channels, cfg.channels, 3, 1, 1, rng);
  } else {
    qkv_ = nn::Linear<T>(store, name + ".qkv", cfg.channels, 3 * cfg.channels, rng);
  }
}

template <typename T>
Var<T> Branch<T>::operator()(const Var<T>& tokens, std::size_t grid_h, std::size_t grid_w) const {
  if (kind_ == BranchKind::kConvolution) {
    auto map = nn::tokens_to_map(tokens, grid_h, grid_w);
    return nn::map_to_tokens(tensor::relu(conv_(map)));
  }
  const std::size_t c = cfg_.channels;
  auto qkv = qkv_(tokens);
  auto q = tensor::slice(qkv, 1, 0, c);
  auto k = tensor::slice(qkv, 1, c, 2 * c);
  auto v = tensor::slice(qkv, 1, 2 * c, 3 * c);
  switch (kind_) {
    case BranchKind::kDense:
      return dense_attention(q, k, v, cfg_.heads).out;
    case BranchKind::kWindow:
      cfg_.validate(grid_h, grid_w);
      return window_attention(q, k, v, grid_h, grid_w, cfg_.window_h, cfg_.window_w, cfg_.heads)
          .out;
    case BranchKind::kChannelGroup:
      return group_channel_attention(q, k, v, cfg_.groups()).out;
    default:
      break;
  }
  throw ConfigError("unhandled branch kind");
}

template <typename T>
DualAttentionBlock<T>::DualAttentionBlock(ParameterStore<T>& store, const std::string& name,
                                          const BlockConfig& cfg, const BlockVariant& variant,
                                          Rng& rng)
    : cfg_(cfg), variant_(variant) {
  cfg.validate();
  const std::size_t c = cfg.channels;
  norm1_ = nn::LayerNorm<T>(store, name + ".norm1", c);
  first_ = Branch<T>(store, name + ".branch1", variant.first, cfg, rng);
  second_ = Branch<T>(store, name + ".branch2", variant.second, cfg, rng);
  if (variant.uses_gate()) gate_ = DetailGate<T>(store, name + ".gate", c, rng);
  merge_ = nn::Linear<T>(store, name + ".merge", 2 * c, c, rng);
  norm2_ = nn::LayerNorm<T>(store, name + ".norm2", c);
  fc1_ = nn::Linear<T>(store, name + ".mlp.fc1", c, cfg.mlp_ratio * c, rng);
  fc2_ = nn::Linear<T>(store, name + ".mlp.fc2", cfg.mlp_ratio * c, c, rng);
}

template <typename T>
Var<T> DualAttentionBlock<T>::gate(const TokenMap<T>& x) const {
  if (!variant_.uses_gate()) return {};
  return gate_(nn::tokens_to_map(x.tokens, x.grid_h, x.grid_w));
}

template <typename T>
Var<T> DualAttentionBlock<T>::attention_unit(const TokenMap<T>& x,
                                             const std::optional<Tensor<T>>& gate_override) const {
  const std::size_t p = x.count(), c = cfg_.channels;
  if (x.tokens.rank() != 2 || x.tokens.dim(0) != p || x.tokens.dim(1) != c) {
    throw ShapeError("block expects [" + std::to_string(p) + " x " + std::to_string(c) +
                     "] tokens, got " + tensor::to_string(x.tokens.shape()));
  }
  auto y = norm1_(x.tokens);
  auto a = first_(y, x.grid_h, x.grid_w);
  auto b = second_(y, x.grid_h, x.grid_w);
  if (variant_.uses_gate()) {
    Var<T> g;
    if (gate_override) {
      if (gate_override->shape() != Shape{1, x.grid_h, x.grid_w}) {
        throw ShapeError("gate override must be [1 x h x w], got " +
                         tensor::to_string(gate_override->shape()));
      }
      g = tensor::constant(*gate_override);
    } else {
      g = gate(x);
    }
    auto gt = tensor::broadcast_to(tensor::reshape(g, Shape{p, 1}), Shape{p, c});
    if (variant_.gate_first) a = a * gt;
    if (variant_.gate_second) b = b * gt;
  }
  return x.tokens + merge_(tensor::concat<T>({a, b}, 1));
}

template <typename T>
TokenMap<T> DualAttentionBlock<T>::operator()(const TokenMap<T>& x) const {
  auto h = attention_unit(x);
  auto out = h + fc2_(tensor::gelu(fc1_(norm2_(h))));
  return {out, x.grid_h, x.grid_w};
}

template <typename T>
PatchEmbed<T>::PatchEmbed(ParameterStore<T>& store, const std::string& name,
                          std::size_t in_channels, std::size_t channels, std::size_t grid_h,
                          std::size_t grid_w, Rng& rng)
    : conv_(store, name + ".proj", in_channels, channels, 3, 2, 1, rng),
      pos_(store.add(name + ".pos",
                     tensor::trunc_normal<T>({grid_h * grid_w, channels}, 0.02, rng))),
      grid_h_(grid_h),
      grid_w_(grid_w) {}

template <typename T>
TokenMap<T> PatchEmbed<T>::operator()(const Var<T>& x) const {
  if (x.rank() != 3 || x.dim(1) % 2 != 0 || x.dim(2) % 2 != 0) {
    throw ShapeError("patch embedding needs [C x H x W] with even H, W; got " +
                     tensor::to_string(x.shape()));
  }
  if (x.dim(1) / 2 != grid_h_ || x.dim(2) / 2 != grid_w_) {
    throw ShapeError("patch embedding built for " + std::to_string(2 * grid_h_) + "x" +
                     std::to_string(2 * grid_w_) + " input, got " + tensor::to_string(x.shape()));
  }
  auto tokens = nn::map_to_tokens(conv_(x)) + pos_;
  return {tokens, grid_h_, grid_w_};
}

namespace {

BlockConfig fitted(BlockConfig cfg, std::size_t grid_h, std::size_t grid_w) {
  cfg.window_h = fit_window(cfg.window_h, grid_h);
  cfg.window_w = fit_window(cfg.window_w, grid_w);
  return cfg;
}

}  // namespace

template <typename T>
HybridStage<T>::HybridStage(ParameterStore<T>& store, const std::string& name,
                            std::size_t in_channels, std::size_t in_h, std::size_t in_w,
                            const BlockConfig& cfg, const BlockVariant& variant, Rng& rng) {
  if (in_h % 2 != 0 || in_w % 2 != 0 || in_h == 0 || in_w == 0) {
    throw ShapeError("stage input must have even spatial dims, got " + std::to_string(in_h) +
                     "x" + std::to_string(in_w));
  }
  embed_ = PatchEmbed<T>(store, name + ".embed", in_channels, cfg.channels, in_h / 2, in_w / 2,
                         rng);
  block_ = DualAttentionBlock<T>(store, name + ".block", fitted(cfg, in_h / 2, in_w / 2), variant,
                                 rng);
}

template <typename T>
Var<T> HybridStage<T>::operator()(const Var<T>& x) const {
  auto out = block_(embed_(x));
  return nn::tokens_to_map(out.tokens, out.grid_h, out.grid_w);
}

template struct DetailGate<float>;
template struct DetailGate<double>;
template class Branch<float>;
template class Branch<double>;
template class DualAttentionBlock<float>;
template class DualAttentionBlock<double>;
template class PatchEmbed<float>;
template class PatchEmbed<double>;
template class HybridStage<float>;
template class HybridStage<double>;

}  // namespace unict::attention
