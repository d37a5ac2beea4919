#include "unict/attention/attention.hpp"

#include <cmath>

namespace unict::attention {

using tensor::Shape;
using tensor::ShapeError;

namespace {

template <typename T>
void check_qkv(const Var<T>& q, const Var<T>& k, const Var<T>& v) {
  if (q.rank() != 2 || q.shape() != k.shape() || q.shape() != v.shape()) {
    throw ShapeError("attention expects q, k, v of equal shape [P x C], got " +
                     tensor::to_string(q.shape()) + ", " + tensor::to_string(k.shape()) + ", " +
                     tensor::to_string(v.shape()));
  }
}

// [N_w x P_w x C] -> [(N_w*heads) x P_w x C_h]
template <typename T>
Var<T> split_heads(const Var<T>& x, std::size_t heads) {
  const std::size_t nw = x.dim(0), pw = x.dim(1), c = x.dim(2), ch = c / heads;
  auto y = tensor::permute(tensor::reshape(x, Shape{nw, pw, heads, ch}), {0, 2, 1, 3});
  return tensor::reshape(y, Shape{nw * heads, pw, ch});
}

template <typename T>
Var<T> merge_heads(const Var<T>& x, std::size_t windows, std::size_t heads) {
  const std::size_t pw = x.dim(1), ch = x.dim(2);
  auto y = tensor::permute(tensor::reshape(x, Shape{windows, heads, pw, ch}), {0, 2, 1, 3});
  return tensor::reshape(y, Shape{windows, pw, heads * ch});
}

}  // namespace

template <typename T>
AttentionResult<T> window_attention(const Var<T>& q, const Var<T>& k, const Var<T>& v,
                                    std::size_t grid_h, std::size_t grid_w, std::size_t win_h,
                                    std::size_t win_w, std::size_t heads) {
  check_qkv(q, k, v);
  const std::size_t c = q.dim(1);
  if (q.dim(0) != grid_h * grid_w) {
    throw ShapeError("token count " + std::to_string(q.dim(0)) + " != grid " +
                     std::to_string(grid_h) + "x" + std::to_string(grid_w));
  }
  if (heads == 0 || c % heads != 0) {
    throw ConfigError("channels (" + std::to_string(c) + ") not divisible by heads (" +
                      std::to_string(heads) + ")");
  }
  if (win_h == 0 || win_w == 0 || grid_h % win_h != 0 || grid_w % win_w != 0) {
    throw ConfigError("token grid " + std::to_string(grid_h) + "x" + std::to_string(grid_w) +
                      " not divisible by window " + std::to_string(win_h) + "x" +
                      std::to_string(win_w));
  }
  const std::size_t nw = (grid_h / win_h) * (grid_w / win_w);
  auto part = [&](const Var<T>& x) {
    return split_heads(tensor::window_partition(x, grid_h, grid_w, win_h, win_w), heads);
  };
  auto qh = part(q), kh = part(k), vh = part(v);
  const T scale = T(1) / std::sqrt(static_cast<T>(c / heads));
  auto scores = tensor::scale(tensor::bmm(qh, tensor::transpose(kh)), scale);
  auto probs = tensor::softmax(scores, 2);
  auto out = merge_heads(tensor::bmm(probs, vh), nw, heads);
  return {tensor::window_merge(out, grid_h, grid_w, win_h, win_w), probs};
}

template <typename T>
AttentionResult<T> dense_attention(const Var<T>& q, const Var<T>& k, const Var<T>& v,
                                   std::size_t heads) {
  check_qkv(q, k, v);
  const std::size_t p = q.dim(0);
  return window_attention(q, k, v, 1, p, 1, p, heads);
}

template <typename T>
AttentionResult<T> group_channel_attention(const Var<T>& q, const Var<T>& k, const Var<T>& v,
                                           std::size_t groups) {
  check_qkv(q, k, v);
  const std::size_t p = q.dim(0), c = q.dim(1);
  if (groups == 0 || c % groups != 0) {
    throw ConfigError("channels (" + std::to_string(c) + ") not divisible by groups (" +
                      std::to_string(groups) + ")");
  }
  const std::size_t cg = c / groups;
  const Shape grouped{p, groups, cg};
  // Q_g^T and V_g^T: [groups x C_g x P]; K_g: [groups x P x C_g].
  auto qt = tensor::permute(tensor::reshape(q, grouped), {1, 2, 0});
  auto kg = tensor::permute(tensor::reshape(k, grouped), {1, 0, 2});
  auto vt = tensor::permute(tensor::reshape(v, grouped), {1, 2, 0});
  const T scale = T(1) / std::sqrt(static_cast<T>(cg));
  auto probs = tensor::softmax(tensor::scale(tensor::bmm(qt, kg), scale), 2);
  auto out_t = tensor::bmm(probs, vt);
  auto out = tensor::reshape(tensor::permute(out_t, {2, 0, 1}), Shape{p, c});
  return {out, probs};
}

tensor::OpCounter count_attention_macs(const BlockConfig& cfg, std::size_t tokens) {
  cfg.validate();
  const std::uint64_t p = tokens, c = cfg.channels, pw = cfg.window_tokens(),
                      cg = cfg.group_channels;
  if (p == 0 || p % pw != 0) {
    throw ConfigError("token count " + std::to_string(p) + " not a multiple of window size " +
                      std::to_string(pw));
  }
  tensor::OpCounter out;
  // QK^T and AV each cost (rows * cols * inner) per window/head/group.
  out.add("dense", 2 * p * p * c);
  out.add("window", 2 * p * pw * c);
  out.add("channel", 2 * p * c * cg);
  out.add("qkv_projection", 3 * p * c * c);
  return out;
}

#define UNICT_INSTANTIATE(T)                                                                    \
  template AttentionResult<T> window_attention(const Var<T>&, const Var<T>&, const Var<T>&,     \
                                               std::size_t, std::size_t, std::size_t,           \
                                               std::size_t, std::size_t);                       \
  template AttentionResult<T> dense_attention(const Var<T>&, const Var<T>&, const Var<T>&,      \
                                              std::size_t);                                     \
  template AttentionResult<T> group_channel_attention(const Var<T>&, const Var<T>&,             \
                                                      const Var<T>&, std::size_t);

UNICT_INSTANTIATE(float)
UNICT_INSTANTIATE(double)

}  // namespace unict::attention
