#pragma once

#include <cstddef>
#include <vector>

#include "unict/tensor/autodiff.hpp"

// Differentiable operations. Every op validates shapes up front (ShapeError),
// checks its output for NaN/Inf (NumericError), and records MACs into the
// active OpCounter for the dense linear-algebra kernels.
namespace unict::tensor {

template <typename T>
Var<T> constant(Tensor<T> value) {
  return Var<T>(std::move(value), false);
}
template <typename T>
Var<T> parameter(Tensor<T> value) {
  return Var<T>(std::move(value), true);
}

// ---- elementwise ----------------------------------------------------------
template <typename T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> scale(const Var<T>& a, T s);
template <typename T> Var<T> add_scalar(const Var<T>& a, T s);
template <typename T> Var<T> relu(const Var<T>& x);
template <typename T> Var<T> gelu(const Var<T>& x);
template <typename T> Var<T> sigmoid(const Var<T>& x);
template <typename T> Var<T> softplus(const Var<T>& x);
template <typename T> Var<T> abs(const Var<T>& x);
template <typename T> Var<T> square(const Var<T>& x);

/// Numpy-style broadcast with equal rank: each source dim is 1 or equal.
template <typename T> Var<T> broadcast_to(const Var<T>& x, const Shape& shape);

// ---- shape ------------------------------------------------------------------
template <typename T> Var<T> reshape(const Var<T>& x, const Shape& shape);
template <typename T> Var<T> permute(const Var<T>& x, const std::vector<std::size_t>& axes);
/// 2-D transpose, or swap of the last two axes for rank 3.
template <typename T> Var<T> transpose(const Var<T>& x);
template <typename T> Var<T> concat(const std::vector<Var<T>>& xs, std::size_t axis);
template <typename T>
Var<T> slice(const Var<T>& x, std::size_t axis, std::size_t begin, std::size_t end);
/// out[i] = x[index[i]] along axis 0.
template <typename T>
Var<T> gather_rows(const Var<T>& x, const std::vector<std::size_t>& index);

/// (grid_h*grid_w) x C tokens -> (N_w) x (win_h*win_w) x C, windows in
/// row-major window order, tokens row-major inside each window.
template <typename T>
Var<T> window_partition(const Var<T>& tokens, std::size_t grid_h, std::size_t grid_w,
                        std::size_t win_h, std::size_t win_w);
template <typename T>
Var<T> window_merge(const Var<T>& windows, std::size_t grid_h, std::size_t grid_w,
                    std::size_t win_h, std::size_t win_w);
std::vector<std::size_t> window_partition_index(std::size_t grid_h, std::size_t grid_w,
                                                std::size_t win_h, std::size_t win_w);

// ---- linear algebra -------------------------------------------------------
template <typename T> Var<T> matmul(const Var<T>& a, const Var<T>& b);
/// Batched product: [n x m x k] * [n x k x p] -> [n x m x p]. Counted as "bmm".
template <typename T> Var<T> bmm(const Var<T>& a, const Var<T>& b);
/// x [N x in] * weight[out x in]^T + bias[out]. `bias` may be undefined.
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias);

// ---- convolution ------------------------------------------------------------
std::size_t conv_output_size(std::size_t in, std::size_t kernel, std::size_t stride,
                             std::size_t padding);
std::size_t deconv_output_size(std::size_t in, std::size_t kernel, std::size_t stride,
                               std::size_t padding, std::size_t output_padding);

/// x [C_in x H x W], weight [C_out x C_in x k x k], bias [C_out] or undefined.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, std::size_t stride,
              std::size_t padding);
/// Transposed convolution. weight [C_in x C_out x k x k].
template <typename T>
Var<T> deconv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, std::size_t stride,
                std::size_t padding, std::size_t output_padding);

// ---- reductions / normalization -------------------------------------------
/// [C x H x W] -> [1 x H x W]
template <typename T> Var<T> channel_max(const Var<T>& x);
template <typename T> Var<T> channel_mean(const Var<T>& x);
/// Sum of all elements -> shape {1}.
template <typename T> Var<T> sum(const Var<T>& x);
template <typename T> Var<T> mean(const Var<T>& x);
/// Max-subtracted softmax along `axis`.
template <typename T> Var<T> softmax(const Var<T>& x, std::size_t axis);
/// Normalizes over the last axis.
template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps = T(1e-5));
/// x [C x H x W], statistics over (C/groups) x H x W blocks.
template <typename T>
Var<T> group_norm(const Var<T>& x, std::size_t groups, const Var<T>& gamma, const Var<T>& beta,
                  T eps = T(1e-5));

template <typename T> Var<T> operator+(const Var<T>& a, const Var<T>& b) { return add(a, b); }
template <typename T> Var<T> operator-(const Var<T>& a, const Var<T>& b) { return sub(a, b); }
template <typename T> Var<T> operator*(const Var<T>& a, const Var<T>& b) { return mul(a, b); }

}  // namespace unict::tensor
