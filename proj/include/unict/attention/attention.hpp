#pragma once

#include "unict/attention/config.hpp"
#include "unict/tensor/op_counter.hpp"
#include "unict/tensor/ops.hpp"

namespace unict::attention {

using tensor::Var;

template <typename T>
struct AttentionResult {
  Var<T> out;    // [P x C]
  Var<T> probs;  // softmax rows; [batch x rows x cols]
};

/// Multi-head scaled dot-product attention restricted to non-overlapping
/// win_h x win_w windows of a grid_h x grid_w token grid. q, k, v: [P x C].
/// Scale is 1/sqrt(C/heads). probs: [(N_w*heads) x P_w x P_w].
template <typename T>
AttentionResult<T> window_attention(const Var<T>& q, const Var<T>& k, const Var<T>& v,
                                    std::size_t grid_h, std::size_t grid_w, std::size_t win_h,
                                    std::size_t win_w, std::size_t heads);

/// Global multi-head attention; the single-window case of window_attention.
template <typename T>
AttentionResult<T> dense_attention(const Var<T>& q, const Var<T>& k, const Var<T>& v,
                                   std::size_t heads);

/// Channel-group attention on transposed tokens: for each of `groups` channel
/// groups, softmax(Q_g^T K_g / sqrt(C_g)) V_g^T, transposed back and the
/// groups re-concatenated. probs: [groups x C_g x C_g].
template <typename T>
AttentionResult<T> group_channel_attention(const Var<T>& q, const Var<T>& k, const Var<T>& v,
                                           std::size_t groups);

/// Analytic MACs of the attention core (scores plus aggregation) for P
/// tokens, keyed "dense", "window", "channel". Projections are excluded; they
/// are identical across the three and are reported under "qkv_projection".
/// Throws ConfigError when P is not a multiple of the window size.
tensor::OpCounter count_attention_macs(const BlockConfig& cfg, std::size_t tokens);

}  // namespace unict::attention
