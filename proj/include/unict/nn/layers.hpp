#pragma once

#include <string>

#include "unict/tensor/ops.hpp"
#include "unict/tensor/parameters.hpp"

// Thin parameter-owning wrappers over the tensor ops. Each registers its
// leaves in a ParameterStore under "<name>.weight" / "<name>.bias" etc.
namespace unict::nn {

using tensor::ParameterStore;
using tensor::Rng;
using tensor::Shape;
using tensor::Tensor;
using tensor::Var;

/// Token-wise affine map, weights truncated-normal(0.02).
template <typename T>
struct Linear {
  Var<T> weight;
  Var<T> bias;

  Linear() = default;
  Linear(ParameterStore<T>& store, const std::string& name, std::size_t in, std::size_t out,
         Rng& rng)
      : weight(store.add(name + ".weight", tensor::trunc_normal<T>({out, in}, 0.02, rng))),
        bias(store.add(name + ".bias", Tensor<T>({out}))) {}

  Var<T> operator()(const Var<T>& x) const { return tensor::linear(x, weight, bias); }
};

/// Square-kernel convolution, weights Kaiming-uniform.
template <typename T>
struct Conv2d {
  Var<T> weight;
  Var<T> bias;
  std::size_t stride = 1;
  std::size_t padding = 0;

  Conv2d() = default;
  Conv2d(ParameterStore<T>& store, const std::string& name, std::size_t in, std::size_t out,
         std::size_t kernel, std::size_t stride_, std::size_t padding_, Rng& rng)
      : weight(store.add(name + ".weight", tensor::kaiming_uniform<T>({out, in, kernel, kernel},
                                                                      in * kernel * kernel, rng))),
        bias(store.add(name + ".bias", Tensor<T>({out}))),
        stride(stride_),
        padding(padding_) {}

  Var<T> operator()(const Var<T>& x) const {
    return tensor::conv2d(x, weight, bias, stride, padding);
  }
};

/// Stride-2, kernel-3 transposed convolution that exactly doubles H and W
/// (padding 1, output padding 1).
template <typename T>
struct Upsample2x {
  Var<T> weight;
  Var<T> bias;

  Upsample2x() = default;
  Upsample2x(ParameterStore<T>& store, const std::string& name, std::size_t in, std::size_t out,
             Rng& rng)
      : weight(store.add(name + ".weight",
                         tensor::kaiming_uniform<T>({in, out, 3, 3}, in * 9 / 4, rng))),
        bias(store.add(name + ".bias", Tensor<T>({out}))) {}

  Var<T> operator()(const Var<T>& x) const { return tensor::deconv2d(x, weight, bias, 2, 1, 1); }
};

template <typename T>
struct LayerNorm {
  Var<T> gamma;
  Var<T> beta;

  LayerNorm() = default;
  LayerNorm(ParameterStore<T>& store, const std::string& name, std::size_t channels)
      : gamma(store.add(name + ".gamma", Tensor<T>({channels}, T{1}))),
        beta(store.add(name + ".beta", Tensor<T>({channels}))) {}

  Var<T> operator()(const Var<T>& x) const { return tensor::layer_norm(x, gamma, beta); }
};

/// Largest divisor of `channels` not exceeding 8.
inline std::size_t default_groups(std::size_t channels) {
  for (std::size_t g = 8; g > 1; --g) {
    if (channels % g == 0) return g;
  }
  return 1;
}

template <typename T>
struct GroupNorm {
  std::size_t groups = 1;
  Var<T> gamma;
  Var<T> beta;

  GroupNorm() = default;
  GroupNorm(ParameterStore<T>& store, const std::string& name, std::size_t channels)
      : groups(default_groups(channels)),
        gamma(store.add(name + ".gamma", Tensor<T>({channels}, T{1}))),
        beta(store.add(name + ".beta", Tensor<T>({channels}))) {}

  Var<T> operator()(const Var<T>& x) const { return tensor::group_norm(x, groups, gamma, beta); }
};

/// [P x C] tokens on an h x w grid -> [C x h x w] feature map.
template <typename T>
Var<T> tokens_to_map(const Var<T>& tokens, std::size_t h, std::size_t w) {
  return tensor::reshape(tensor::transpose(tokens), Shape{tokens.dim(1), h, w});
}

/// [C x h x w] -> [h*w x C].
template <typename T>
Var<T> map_to_tokens(const Var<T>& map) {
  return tensor::transpose(tensor::reshape(map, Shape{map.dim(0), map.dim(1) * map.dim(2)}));
}

}  // namespace unict::nn
