#include "unict/tensor/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>

#include <Eigen/Core>

#include "unict/tensor/op_counter.hpp"

namespace unict::tensor {

namespace {

using detail::make_result;

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using ConstMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using MutMap = Eigen::Map<RowMat<T>>;

// c[m x n] (+)= op(a) * op(b), row-major buffers. op(a) is m x k.
template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const T* a,
          const T* b, T* c, bool accumulate) {
  const auto M = static_cast<Eigen::Index>(m);
  const auto N = static_cast<Eigen::Index>(n);
  const auto K = static_cast<Eigen::Index>(k);
  ConstMap<T> A(a, trans_a ? K : M, trans_a ? M : K);
  ConstMap<T> B(b, trans_b ? N : K, trans_b ? K : N);
  MutMap<T> C(c, M, N);
  if (!accumulate) C.setZero();
  if (trans_a && trans_b) {
    C.noalias() += A.transpose() * B.transpose();
  } else if (trans_a) {
    C.noalias() += A.transpose() * B;
  } else if (trans_b) {
    C.noalias() += A * B.transpose();
  } else {
    C.noalias() += A * B;
  }
}

template <typename T>
Node<T>* wants(Node<T>& self, std::size_t i) {
  Node<T>* p = self.parents[i].get();
  return (p && p->requires_grad) ? p : nullptr;
}

void require(bool cond, const std::string& msg) {
  if (!cond) throw ShapeError(msg);
}

template <typename T>
void require_same(const char* op, const Var<T>& a, const Var<T>& b) {
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " + to_string(a.shape()) +
                                      " vs " + to_string(b.shape()));
}

std::vector<std::size_t> strides_of(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

// Elementwise unary op with derivative expressed in terms of (x, y).
template <typename T, typename F, typename D>
Var<T> unary(const char* name, const Var<T>& x, F f, D df) {
  Tensor<T> out(x.shape());
  const T* in = x.value().data();
  T* o = out.data();
  for (std::size_t i = 0; i < out.size(); ++i) o[i] = f(in[i]);
  return make_result<T>(name, std::move(out), {x}, [df](Node<T>& self) {
    if (auto* p = wants(self, 0)) {
      T* g = p->grad_buffer().data();
      const T* xv = p->value.data();
      const T* yv = self.value.data();
      const T* gy = self.grad.data();
      for (std::size_t i = 0; i < self.value.size(); ++i) g[i] += gy[i] * df(xv[i], yv[i]);
    }
  });
}

// Output columns [lo, hi) whose input column ox*stride + kx - pad lies in [0, w).
struct ValidRange {
  std::size_t lo, hi;
};

inline ValidRange valid_range(std::size_t kx, std::size_t stride, std::size_t pad, std::size_t w,
                              std::size_t wo) {
  const auto first = static_cast<std::ptrdiff_t>(pad) - static_cast<std::ptrdiff_t>(kx);
  const std::size_t lo =
      first <= 0 ? 0 : (static_cast<std::size_t>(first) + stride - 1) / stride;
  const auto last = static_cast<std::ptrdiff_t>(w) - 1 + first;  // largest ox*stride allowed
  if (last < 0) return {0, 0};
  const std::size_t hi = std::min(wo, static_cast<std::size_t>(last) / stride + 1);
  return {std::min(lo, hi), hi};
}

template <typename T>
void im2col(const T* x, std::size_t c, std::size_t h, std::size_t w, std::size_t k,
            std::size_t stride, std::size_t pad, std::size_t ho, std::size_t wo, T* col) {
  const std::size_t plane = ho * wo;
  for (std::size_t ci = 0; ci < c; ++ci) {
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        T* row = col + ((ci * k + ky) * k + kx) * plane;
        const auto [lo, hi] = valid_range(kx, stride, pad, w, wo);
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * stride + ky) -
                          static_cast<std::ptrdiff_t>(pad);
          T* dst = row + oy * wo;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) {
            std::fill(dst, dst + wo, T{0});
            continue;
          }
          // Input column of ox is ox*stride + kx - pad, non-negative on [lo, hi).
          const T* src = x + (ci * h + static_cast<std::size_t>(iy)) * w;
          std::fill(dst, dst + lo, T{0});
          if (stride == 1 && lo < hi) {
            std::copy(src + (lo + kx - pad), src + (hi + kx - pad), dst + lo);
          } else {
            for (std::size_t ox = lo; ox < hi; ++ox) dst[ox] = src[ox * stride + kx - pad];
          }
          std::fill(dst + hi, dst + wo, T{0});
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-adds columns back into an image buffer.
template <typename T>
void col2im(const T* col, std::size_t c, std::size_t h, std::size_t w, std::size_t k,
            std::size_t stride, std::size_t pad, std::size_t ho, std::size_t wo, T* x) {
  const std::size_t plane = ho * wo;
  for (std::size_t ci = 0; ci < c; ++ci) {
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        const T* row = col + ((ci * k + ky) * k + kx) * plane;
        const auto [lo, hi] = valid_range(kx, stride, pad, w, wo);
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * stride + ky) -
                          static_cast<std::ptrdiff_t>(pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          T* dst = x + (ci * h + static_cast<std::size_t>(iy)) * w;
          const T* src = row + oy * wo;
          for (std::size_t ox = lo; ox < hi; ++ox) dst[ox * stride + kx - pad] += src[ox];
        }
      }
    }
  }
}

// Scratch buffer without value-initialization; every element is written
// before it is read.
template <typename T>
std::unique_ptr<T[]> scratch(std::size_t n) {
  return std::unique_ptr<T[]>(new T[n]);
}

}  // namespace

// ---- elementwise ----------------------------------------------------------

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same("add", a, b);
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  return make_result<T>("add", std::move(out), {a, b}, [](Node<T>& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (auto* p = wants(self, k)) p->accumulate(self.grad);
    }
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  require_same("sub", a, b);
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
  return make_result<T>("sub", std::move(out), {a, b}, [](Node<T>& self) {
    if (auto* p = wants(self, 0)) p->accumulate(self.grad);
    if (auto* p = wants(self, 1)) {
      T* g = p->grad_buffer().data();
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require_same("mul", a, b);
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  return make_result<T>("mul", std::move(out), {a, b}, [](Node<T>& self) {
    const auto& va = self.parents[0]->value;
    const auto& vb = self.parents[1]->value;
    if (auto* p = wants(self, 0)) {
      T* g = p->grad_buffer().data();
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * vb[i];
    }
    if (auto* p = wants(self, 1)) {
      T* g = p->grad_buffer().data();
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * va[i];
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T s) {
  return unary<T>(
      "scale", a, [s](T x) { return x * s; }, [s](T, T) { return s; });
}

template <typename T>
Var<T> add_scalar(const Var<T>& a, T s) {
  return unary<T>(
      "add_scalar", a, [s](T x) { return x + s; }, [](T, T) { return T{1}; });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
  return unary<T>(
      "relu", x, [](T v) { return v > T{0} ? v : T{0}; },
      [](T v, T) { return v > T{0} ? T{1} : T{0}; });
}

template <typename T>
Var<T> gelu(const Var<T>& x) {
  constexpr T kInvSqrt2 = T(0.70710678118654752440);
  constexpr T kInvSqrt2Pi = T(0.39894228040143267794);
  return unary<T>(
      "gelu", x, [=](T v) { return T(0.5) * v * (T{1} + std::erf(v * kInvSqrt2)); },
      [=](T v, T) {
        const T cdf = T(0.5) * (T{1} + std::erf(v * kInvSqrt2));
        return cdf + v * kInvSqrt2Pi * std::exp(T(-0.5) * v * v);
      });
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
  return unary<T>(
      "sigmoid", x,
      [](T v) {
        if (v >= T{0}) return T{1} / (T{1} + std::exp(-v));
        const T e = std::exp(v);
        return e / (T{1} + e);
      },
      [](T, T y) { return y * (T{1} - y); });
}

template <typename T>
Var<T> softplus(const Var<T>& x) {
  return unary<T>(
      "softplus", x,
      [](T v) { return std::max(v, T{0}) + std::log1p(std::exp(-std::abs(v))); },
      [](T v, T) {
        if (v >= T{0}) return T{1} / (T{1} + std::exp(-v));
        const T e = std::exp(v);
        return e / (T{1} + e);
      });
}

template <typename T>
Var<T> abs(const Var<T>& x) {
  return unary<T>(
      "abs", x, [](T v) { return std::abs(v); },
      [](T v, T) { return v > T{0} ? T{1} : (v < T{0} ? T{-1} : T{0}); });
}

template <typename T>
Var<T> square(const Var<T>& x) {
  return unary<T>(
      "square", x, [](T v) { return v * v; }, [](T v, T) { return T{2} * v; });
}

template <typename T>
Var<T> broadcast_to(const Var<T>& x, const Shape& shape) {
  const Shape& src = x.shape();
  require(src.size() == shape.size(),
          "broadcast_to: rank mismatch " + to_string(src) + " -> " + to_string(shape));
  for (std::size_t i = 0; i < src.size(); ++i) {
    require(src[i] == shape[i] || src[i] == 1,
            "broadcast_to: incompatible " + to_string(src) + " -> " + to_string(shape));
  }
  // Map every output flat index to its source flat index once.
  const auto out_strides = strides_of(shape);
  auto src_strides = strides_of(src);
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (src[i] == 1) src_strides[i] = 0;
  }
  const std::size_t n = numel(shape);
  std::vector<std::size_t> map(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t rem = i, off = 0;
    for (std::size_t d = 0; d < shape.size(); ++d) {
      off += (rem / out_strides[d]) * src_strides[d];
      rem %= out_strides[d];
    }
    map[i] = off;
  }
  Tensor<T> out(shape);
  for (std::size_t i = 0; i < n; ++i) out[i] = x.value()[map[i]];
  return make_result<T>("broadcast_to", std::move(out), {x},
                        [map = std::move(map)](Node<T>& self) {
                          if (auto* p = wants(self, 0)) {
                            T* g = p->grad_buffer().data();
                            for (std::size_t i = 0; i < map.size(); ++i) g[map[i]] += self.grad[i];
                          }
                        });
}

// ---- shape ------------------------------------------------------------------

template <typename T>
Var<T> reshape(const Var<T>& x, const Shape& shape) {
  Tensor<T> out = x.value().reshaped(shape);
  return make_result<T>("reshape", std::move(out), {x}, [](Node<T>& self) {
    if (auto* p = wants(self, 0)) p->accumulate(self.grad);
  });
}

template <typename T>
Var<T> permute(const Var<T>& x, const std::vector<std::size_t>& axes) {
  const Shape& in = x.shape();
  require(axes.size() == in.size(), "permute: axes rank mismatch");
  std::vector<bool> used(in.size(), false);
  Shape out_shape(in.size());
  for (std::size_t i = 0; i < axes.size(); ++i) {
    require(axes[i] < in.size() && !used[axes[i]], "permute: invalid axes");
    used[axes[i]] = true;
    out_shape[i] = in[axes[i]];
  }
  const auto in_strides = strides_of(in);
  const auto out_strides = strides_of(out_shape);
  const std::size_t n = x.size();
  std::vector<std::size_t> map(n);  // out flat -> in flat
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t rem = i, off = 0;
    for (std::size_t d = 0; d < out_shape.size(); ++d) {
      off += (rem / out_strides[d]) * in_strides[axes[d]];
      rem %= out_strides[d];
    }
    map[i] = off;
  }
  Tensor<T> out(out_shape);
  for (std::size_t i = 0; i < n; ++i) out[i] = x.value()[map[i]];
  return make_result<T>("permute", std::move(out), {x}, [map = std::move(map)](Node<T>& self) {
    if (auto* p = wants(self, 0)) {
      T* g = p->grad_buffer().data();
      for (std::size_t i = 0; i < map.size(); ++i) g[map[i]] += self.grad[i];
    }
  });
}

template <typename T>
Var<T> transpose(const Var<T>& x) {
  if (x.shape().size() == 2) return permute(x, {1, 0});
  require(x.shape().size() == 3, "transpose: expects rank 2 or 3");
  return permute(x, {0, 2, 1});
}

template <typename T>
Var<T> concat(const std::vector<Var<T>>& xs, std::size_t axis) {
  require(!xs.empty(), "concat: empty input list");
  const Shape& first = xs.front().shape();
  require(axis < first.size(), "concat: axis out of range");
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& v : xs) {
    require(v.shape().size() == first.size(), "concat: rank mismatch");
    for (std::size_t d = 0; d < first.size(); ++d) {
      if (d != axis) {
        require(v.shape()[d] == first[d], "concat: shape mismatch " + to_string(first) + " vs " +
                                              to_string(v.shape()));
      }
    }
    out_shape[axis] += v.shape()[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
  for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];
  const std::size_t out_row = out_shape[axis] * inner;

  Tensor<T> out(out_shape);
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& v : xs) {
    offsets.push_back(off);
    const std::size_t row = v.shape()[axis] * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(v.value().data() + o * row, row, out.data() + o * out_row + off);
    }
    off += row;
  }
  return make_result<T>("concat", std::move(out), xs,
                        [offsets, outer, out_row](Node<T>& self) {
                          for (std::size_t k = 0; k < self.parents.size(); ++k) {
                            auto* p = wants(self, k);
                            if (!p) continue;
                            const std::size_t row = p->value.size() / outer;
                            T* g = p->grad_buffer().data();
                            for (std::size_t o = 0; o < outer; ++o) {
                              const T* src = self.grad.data() + o * out_row + offsets[k];
                              for (std::size_t i = 0; i < row; ++i) g[o * row + i] += src[i];
                            }
                          }
                        });
}

template <typename T>
Var<T> slice(const Var<T>& x, std::size_t axis, std::size_t begin, std::size_t end) {
  const Shape& in = x.shape();
  require(axis < in.size() && begin < end && end <= in[axis],
          "slice: invalid range on " + to_string(in));
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= in[d];
  for (std::size_t d = axis + 1; d < in.size(); ++d) inner *= in[d];
  Shape out_shape = in;
  out_shape[axis] = end - begin;
  const std::size_t in_row = in[axis] * inner;
  const std::size_t out_row = (end - begin) * inner;
  const std::size_t off = begin * inner;
  Tensor<T> out(out_shape);
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(x.value().data() + o * in_row + off, out_row, out.data() + o * out_row);
  }
  return make_result<T>("slice", std::move(out), {x},
                        [outer, in_row, out_row, off](Node<T>& self) {
                          if (auto* p = wants(self, 0)) {
                            T* g = p->grad_buffer().data();
                            for (std::size_t o = 0; o < outer; ++o) {
                              const T* src = self.grad.data() + o * out_row;
                              T* dst = g + o * in_row + off;
                              for (std::size_t i = 0; i < out_row; ++i) dst[i] += src[i];
                            }
                          }
                        });
}

template <typename T>
Var<T> gather_rows(const Var<T>& x, const std::vector<std::size_t>& index) {
  require(!x.shape().empty(), "gather_rows: scalar input");
  const std::size_t rows = x.shape()[0];
  const std::size_t width = x.size() / std::max<std::size_t>(rows, 1);
  Shape out_shape = x.shape();
  out_shape[0] = index.size();
  Tensor<T> out(out_shape);
  for (std::size_t i = 0; i < index.size(); ++i) {
    require(index[i] < rows, "gather_rows: index out of range");
    std::copy_n(x.value().data() + index[i] * width, width, out.data() + i * width);
  }
  return make_result<T>("gather_rows", std::move(out), {x}, [index, width](Node<T>& self) {
    if (auto* p = wants(self, 0)) {
      T* g = p->grad_buffer().data();
      for (std::size_t i = 0; i < index.size(); ++i) {
        const T* src = self.grad.data() + i * width;
        T* dst = g + index[i] * width;
        for (std::size_t j = 0; j < width; ++j) dst[j] += src[j];
      }
    }
  });
}

std::vector<std::size_t> window_partition_index(std::size_t grid_h, std::size_t grid_w,
                                                std::size_t win_h, std::size_t win_w) {
  require(win_h > 0 && win_w > 0 && grid_h % win_h == 0 && grid_w % win_w == 0,
          "window partition: grid " + std::to_string(grid_h) + "x" + std::to_string(grid_w) +
              " not divisible by window " + std::to_string(win_h) + "x" + std::to_string(win_w));
  std::vector<std::size_t> index;
  index.reserve(grid_h * grid_w);
  for (std::size_t wy = 0; wy < grid_h / win_h; ++wy) {
    for (std::size_t wx = 0; wx < grid_w / win_w; ++wx) {
      for (std::size_t y = 0; y < win_h; ++y) {
        for (std::size_t x = 0; x < win_w; ++x) {
          index.push_back((wy * win_h + y) * grid_w + wx * win_w + x);
        }
      }
    }
  }
  return index;
}

template <typename T>
Var<T> window_partition(const Var<T>& tokens, std::size_t grid_h, std::size_t grid_w,
                        std::size_t win_h, std::size_t win_w) {
  require(tokens.shape().size() == 2 && tokens.shape()[0] == grid_h * grid_w,
          "window_partition: tokens " + to_string(tokens.shape()) + " do not match grid");
  const auto index = window_partition_index(grid_h, grid_w, win_h, win_w);
  const std::size_t channels = tokens.shape()[1];
  const std::size_t per_window = win_h * win_w;
  return reshape(gather_rows(tokens, index),
                 Shape{index.size() / per_window, per_window, channels});
}

template <typename T>
Var<T> window_merge(const Var<T>& windows, std::size_t grid_h, std::size_t grid_w,
                    std::size_t win_h, std::size_t win_w) {
  require(windows.shape().size() == 3 && windows.shape()[0] * windows.shape()[1] == grid_h * grid_w,
          "window_merge: windows " + to_string(windows.shape()) + " do not match grid");
  const auto forward = window_partition_index(grid_h, grid_w, win_h, win_w);
  std::vector<std::size_t> inverse(forward.size());
  for (std::size_t i = 0; i < forward.size(); ++i) inverse[forward[i]] = i;
  const std::size_t channels = windows.shape()[2];
  return gather_rows(reshape(windows, Shape{grid_h * grid_w, channels}), inverse);
}

// ---- linear algebra -------------------------------------------------------

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  require(a.shape().size() == 2 && b.shape().size() == 2 && a.shape()[1] == b.shape()[0],
          "matmul: incompatible " + to_string(a.shape()) + " x " + to_string(b.shape()));
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  Tensor<T> out(Shape{m, n});
  gemm<T>(false, false, m, n, k, a.value().data(), b.value().data(), out.data(), false);
  count_macs("matmul", m * n * k);
  return make_result<T>("matmul", std::move(out), {a, b}, [m, n, k](Node<T>& self) {
    const T* va = self.parents[0]->value.data();
    const T* vb = self.parents[1]->value.data();
    if (auto* p = wants(self, 0)) {
      gemm<T>(false, true, m, k, n, self.grad.data(), vb, p->grad_buffer().data(), true);
    }
    if (auto* p = wants(self, 1)) {
      gemm<T>(true, false, k, n, m, va, self.grad.data(), p->grad_buffer().data(), true);
    }
  });
}

template <typename T>
Var<T> bmm(const Var<T>& a, const Var<T>& b) {
  require(a.shape().size() == 3 && b.shape().size() == 3 && a.shape()[0] == b.shape()[0] &&
              a.shape()[2] == b.shape()[1],
          "bmm: incompatible " + to_string(a.shape()) + " x " + to_string(b.shape()));
  const std::size_t batch = a.shape()[0], m = a.shape()[1], k = a.shape()[2], n = b.shape()[2];
  Tensor<T> out(Shape{batch, m, n});
  for (std::size_t i = 0; i < batch; ++i) {
    gemm<T>(false, false, m, n, k, a.value().data() + i * m * k, b.value().data() + i * k * n,
            out.data() + i * m * n, false);
  }
  count_macs("bmm", batch * m * n * k);
  return make_result<T>("bmm", std::move(out), {a, b}, [batch, m, n, k](Node<T>& self) {
    const T* va = self.parents[0]->value.data();
    const T* vb = self.parents[1]->value.data();
    auto* pa = wants(self, 0);
    auto* pb = wants(self, 1);
    T* ga = pa ? pa->grad_buffer().data() : nullptr;
    T* gb = pb ? pb->grad_buffer().data() : nullptr;
    for (std::size_t i = 0; i < batch; ++i) {
      const T* gy = self.grad.data() + i * m * n;
      if (ga) gemm<T>(false, true, m, k, n, gy, vb + i * k * n, ga + i * m * k, true);
      if (gb) gemm<T>(true, false, k, n, m, va + i * m * k, gy, gb + i * k * n, true);
    }
  });
}

template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
  require(x.shape().size() == 2 && weight.shape().size() == 2 &&
              x.shape()[1] == weight.shape()[1],
          "linear: incompatible " + to_string(x.shape()) + " with weight " +
              to_string(weight.shape()));
  const std::size_t rows = x.shape()[0], in = x.shape()[1], out_dim = weight.shape()[0];
  if (bias.defined()) {
    require(bias.size() == out_dim, "linear: bias size mismatch");
  }
  Tensor<T> out(Shape{rows, out_dim});
  gemm<T>(false, true, rows, out_dim, in, x.value().data(), weight.value().data(), out.data(),
          false);
  if (bias.defined()) {
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t o = 0; o < out_dim; ++o) out[r * out_dim + o] += bias.value()[o];
    }
  }
  count_macs("linear", rows * in * out_dim);
  return make_result<T>("linear", std::move(out), {x, weight, bias},
                        [rows, in, out_dim](Node<T>& self) {
                          const T* vx = self.parents[0]->value.data();
                          const T* vw = self.parents[1]->value.data();
                          const T* gy = self.grad.data();
                          if (auto* p = wants(self, 0)) {
                            gemm<T>(false, false, rows, in, out_dim, gy, vw,
                                    p->grad_buffer().data(), true);
                          }
                          if (auto* p = wants(self, 1)) {
                            gemm<T>(true, false, out_dim, in, rows, gy, vx,
                                    p->grad_buffer().data(), true);
                          }
                          if (auto* p = wants(self, 2)) {
                            T* g = p->grad_buffer().data();
                            for (std::size_t r = 0; r < rows; ++r) {
                              for (std::size_t o = 0; o < out_dim; ++o) g[o] += gy[r * out_dim + o];
                            }
                          }
                        });
}

// ---- convolution ------------------------------------------------------------

std::size_t conv_output_size(std::size_t in, std::size_t kernel, std::size_t stride,
                             std::size_t padding) {
  require(stride > 0 && kernel > 0, "conv: stride and kernel must be positive");
  require(in + 2 * padding >= kernel, "conv: kernel " + std::to_string(kernel) +
                                          " does not fit input " + std::to_string(in) +
                                          " with padding " + std::to_string(padding));
  return (in + 2 * padding - kernel) / stride + 1;
}

std::size_t deconv_output_size(std::size_t in, std::size_t kernel, std::size_t stride,
                               std::size_t padding, std::size_t output_padding) {
  require(stride > 0 && kernel > 0 && in > 0, "deconv: invalid geometry");
  require(output_padding < stride, "deconv: output_padding must be smaller than stride");
  const std::size_t full = (in - 1) * stride + kernel + output_padding;
  require(full > 2 * padding, "deconv: padding too large");
  return full - 2 * padding;
}

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, std::size_t stride,
              std::size_t padding) {
  require(x.shape().size() == 3, "conv2d: input must be C x H x W, got " + to_string(x.shape()));
  require(weight.shape().size() == 4 && weight.shape()[2] == weight.shape()[3],
          "conv2d: weight must be Co x Ci x k x k");
  const std::size_t ci = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
  const std::size_t co = weight.shape()[0], k = weight.shape()[2];
  require(weight.shape()[1] == ci, "conv2d: channel mismatch input " + to_string(x.shape()) +
                                       " weight " + to_string(weight.shape()));
  if (bias.defined()) require(bias.size() == co, "conv2d: bias size mismatch");
  const std::size_t ho = conv_output_size(h, k, stride, padding);
  const std::size_t wo = conv_output_size(w, k, stride, padding);
  const std::size_t plane = ho * wo, patch = ci * k * k;

  std::shared_ptr<T[]> col = scratch<T>(patch * plane);
  im2col(x.value().data(), ci, h, w, k, stride, padding, ho, wo, col.get());
  Tensor<T> out(Shape{co, ho, wo});
  gemm<T>(false, false, co, plane, patch, weight.value().data(), col.get(), out.data(), false);
  // The weight gradient reuses the forward columns.
  if (!(grad_enabled() && weight.requires_grad())) col.reset();
  if (bias.defined()) {
    for (std::size_t c = 0; c < co; ++c) {
      T* row = out.data() + c * plane;
      const T b = bias.value()[c];
      for (std::size_t i = 0; i < plane; ++i) row[i] += b;
    }
  }
  count_macs("conv2d", co * plane * patch);
  return make_result<T>(
      "conv2d", std::move(out), {x, weight, bias},
      [=](Node<T>& self) {
        const T* gy = self.grad.data();
        auto* px = wants(self, 0);
        auto* pw = wants(self, 1);
        if (pw) {
          std::shared_ptr<T[]> c2 = col;
          if (!c2) {
            c2 = scratch<T>(patch * plane);
            im2col(self.parents[0]->value.data(), ci, h, w, k, stride, padding, ho, wo, c2.get());
          }
          gemm<T>(false, true, co, patch, plane, gy, c2.get(), pw->grad_buffer().data(), true);
        }
        if (px) {
          auto dcol = scratch<T>(patch * plane);
          gemm<T>(true, false, patch, plane, co, self.parents[1]->value.data(), gy, dcol.get(),
                  false);
          col2im(dcol.get(), ci, h, w, k, stride, padding, ho, wo, px->grad_buffer().data());
        }
        if (auto* pb = wants(self, 2)) {
          T* g = pb->grad_buffer().data();
          for (std::size_t c = 0; c < co; ++c) {
            T acc{0};
            for (std::size_t i = 0; i < plane; ++i) acc += gy[c * plane + i];
            g[c] += acc;
          }
        }
      });
}

template <typename T>
Var<T> deconv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, std::size_t stride,
                std::size_t padding, std::size_t output_padding) {
  require(x.shape().size() == 3, "deconv2d: input must be C x H x W, got " + to_string(x.shape()));
  require(weight.shape().size() == 4 && weight.shape()[2] == weight.shape()[3],
          "deconv2d: weight must be Ci x Co x k x k");
  const std::size_t ci = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
  const std::size_t co = weight.shape()[1], k = weight.shape()[2];
  require(weight.shape()[0] == ci, "deconv2d: channel mismatch input " + to_string(x.shape()) +
                                       " weight " + to_string(weight.shape()));
  if (bias.defined()) require(bias.size() == co, "deconv2d: bias size mismatch");
  const std::size_t ho = deconv_output_size(h, k, stride, padding, output_padding);
  const std::size_t wo = deconv_output_size(w, k, stride, padding, output_padding);
  const std::size_t in_plane = h * w, patch = co * k * k, out_plane = ho * wo;

  // col[(co k k) x (h w)] = weight^T * x, then scatter onto the output grid.
  auto col = scratch<T>(patch * in_plane);
  gemm<T>(true, false, patch, in_plane, ci, weight.value().data(), x.value().data(), col.get(),
          false);
  Tensor<T> out(Shape{co, ho, wo});
  col2im(col.get(), co, ho, wo, k, stride, padding, h, w, out.data());
  if (bias.defined()) {
    for (std::size_t c = 0; c < co; ++c) {
      T* row = out.data() + c * out_plane;
      const T b = bias.value()[c];
      for (std::size_t i = 0; i < out_plane; ++i) row[i] += b;
    }
  }
  count_macs("deconv2d", ci * patch * in_plane);
  return make_result<T>(
      "deconv2d", std::move(out), {x, weight, bias},
      [=](Node<T>& self) {
        const T* gy = self.grad.data();
        auto* px = wants(self, 0);
        auto* pw = wants(self, 1);
        if (px || pw) {
          auto dcol = scratch<T>(patch * in_plane);
          im2col(gy, co, ho, wo, k, stride, padding, h, w, dcol.get());
          if (px) {
            gemm<T>(false, false, ci, in_plane, patch, self.parents[1]->value.data(), dcol.get(),
                    px->grad_buffer().data(), true);
          }
          if (pw) {
            gemm<T>(false, true, ci, patch, in_plane, self.parents[0]->value.data(), dcol.get(),
                    pw->grad_buffer().data(), true);
          }
        }
        if (auto* pb = wants(self, 2)) {
          T* g = pb->grad_buffer().data();
          for (std::size_t c = 0; c < co; ++c) {
            T acc{0};
            for (std::size_t i = 0; i < out_plane; ++i) acc += gy[c * out_plane + i];
            g[c] += acc;
          }
        }
      });
}

// ---- reductions / normalization -------------------------------------------

template <typename T>
Var<T> channel_max(const Var<T>& x) {
  require(x.shape().size() == 3 && x.shape()[0] >= 1, "channel_max: expects C x H x W");
  const std::size_t c = x.shape()[0], plane = x.shape()[1] * x.shape()[2];
  Tensor<T> out(Shape{1, x.shape()[1], x.shape()[2]});
  std::vector<std::size_t> arg(plane, 0);
  const T* v = x.value().data();
  for (std::size_t i = 0; i < plane; ++i) {
    T best = v[i];
    for (std::size_t ch = 1; ch < c; ++ch) {
      if (v[ch * plane + i] > best) {
        best = v[ch * plane + i];
        arg[i] = ch;
      }
    }
    out[i] = best;
  }
  return make_result<T>("channel_max", std::move(out), {x},
                        [arg = std::move(arg), plane](Node<T>& self) {
                          if (auto* p = wants(self, 0)) {
                            T* g = p->grad_buffer().data();
                            for (std::size_t i = 0; i < plane; ++i) {
                              g[arg[i] * plane + i] += self.grad[i];
                            }
                          }
                        });
}

template <typename T>
Var<T> channel_mean(const Var<T>& x) {
  require(x.shape().size() == 3 && x.shape()[0] >= 1, "channel_mean: expects C x H x W");
  const std::size_t c = x.shape()[0], plane = x.shape()[1] * x.shape()[2];
  Tensor<T> out(Shape{1, x.shape()[1], x.shape()[2]});
  const T* v = x.value().data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < plane; ++i) out[i] += v[ch * plane + i];
  }
  const T inv = T{1} / static_cast<T>(c);
  for (std::size_t i = 0; i < plane; ++i) out[i] *= inv;
  return make_result<T>("channel_mean", std::move(out), {x}, [c, plane, inv](Node<T>& self) {
    if (auto* p = wants(self, 0)) {
      T* g = p->grad_buffer().data();
      for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t i = 0; i < plane; ++i) g[ch * plane + i] += self.grad[i] * inv;
      }
    }
  });
}

template <typename T>
Var<T> sum(const Var<T>& x) {
  T acc{0};
  for (T v : x.value().values()) acc += v;
  return make_result<T>("sum", Tensor<T>::scalar(acc), {x}, [](Node<T>& self) {
    if (auto* p = wants(self, 0)) {
      T* g = p->grad_buffer().data();
      const T gy = self.grad[0];
      for (std::size_t i = 0; i < p->value.size(); ++i) g[i] += gy;
    }
  });
}

template <typename T>
Var<T> mean(const Var<T>& x) {
  require(x.size() > 0, "mean: empty tensor");
  return scale(sum(x), T{1} / static_cast<T>(x.size()));
}

template <typename T>
Var<T> softmax(const Var<T>& x, std::size_t axis) {
  const Shape& s = x.shape();
  require(axis < s.size(), "softmax: axis out of range");
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= s[d];
  for (std::size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
  const std::size_t n = s[axis];
  detail::check_finite("softmax(input)", x.value());
  Tensor<T> out(s);
  const T* v = x.value().data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, v[base + j * inner]);
      T z{0};
      for (std::size_t j = 0; j < n; ++j) {
        const T e = std::exp(v[base + j * inner] - mx);
        out[base + j * inner] = e;
        z += e;
      }
      const T inv = T{1} / z;
      for (std::size_t j = 0; j < n; ++j) out[base + j * inner] *= inv;
    }
  }
  return make_result<T>("softmax", std::move(out), {x}, [outer, inner, n](Node<T>& self) {
    if (auto* p = wants(self, 0)) {
      T* g = p->grad_buffer().data();
      const T* y = self.value.data();
      const T* gy = self.grad.data();
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
          const std::size_t base = o * n * inner + in;
          T dot{0};
          for (std::size_t j = 0; j < n; ++j) dot += gy[base + j * inner] * y[base + j * inner];
          for (std::size_t j = 0; j < n; ++j) {
            const std::size_t idx = base + j * inner;
            g[idx] += y[idx] * (gy[idx] - dot);
          }
        }
      }
    }
  });
}

namespace {

// Shared normalization core: x viewed as `groups` blocks of `block` values;
// affine parameters indexed by channel = (flat index / channel_stride) % C.
template <typename T>
Var<T> normalize(const char* name, const Var<T>& x, std::size_t groups, std::size_t block,
                 std::size_t channel_stride, std::size_t channels, const Var<T>& gamma,
                 const Var<T>& beta, T eps) {
  require(gamma.size() == channels && beta.size() == channels,
          std::string(name) + ": affine parameter size mismatch");
  Tensor<T> out(x.shape());
  std::vector<T> xhat(x.size());
  std::vector<T> inv_std(groups);
  const T* v = x.value().data();
  const T* ga = gamma.value().data();
  const T* be = beta.value().data();
  for (std::size_t gidx = 0; gidx < groups; ++gidx) {
    const T* blk = v + gidx * block;
    T m{0};
    for (std::size_t i = 0; i < block; ++i) m += blk[i];
    m /= static_cast<T>(block);
    T var{0};
    for (std::size_t i = 0; i < block; ++i) var += (blk[i] - m) * (blk[i] - m);
    var /= static_cast<T>(block);
    const T is = T{1} / std::sqrt(var + eps);
    inv_std[gidx] = is;
    for (std::size_t i = 0; i < block; ++i) {
      const std::size_t idx = gidx * block + i;
      const std::size_t ch = (idx / channel_stride) % channels;
      xhat[idx] = (blk[i] - m) * is;
      out[idx] = xhat[idx] * ga[ch] + be[ch];
    }
  }
  return make_result<T>(
      name, std::move(out), {x, gamma, beta},
      [xhat = std::move(xhat), inv_std = std::move(inv_std), groups, block, channel_stride,
       channels](Node<T>& self) {
        const T* gy = self.grad.data();
        const T* ga = self.parents[1]->value.data();
        if (auto* p = wants(self, 0)) {
          T* g = p->grad_buffer().data();
          std::vector<T> dxhat(block);
          for (std::size_t gidx = 0; gidx < groups; ++gidx) {
            T s1{0}, s2{0};
            for (std::size_t i = 0; i < block; ++i) {
              const std::size_t idx = gidx * block + i;
              dxhat[i] = gy[idx] * ga[(idx / channel_stride) % channels];
              s1 += dxhat[i];
              s2 += dxhat[i] * xhat[idx];
            }
            const T nb = static_cast<T>(block);
            for (std::size_t i = 0; i < block; ++i) {
              const std::size_t idx = gidx * block + i;
              g[idx] += inv_std[gidx] / nb * (nb * dxhat[i] - s1 - xhat[idx] * s2);
            }
          }
        }
        auto* pg = wants(self, 1);
        auto* pb = wants(self, 2);
        if (pg || pb) {
          T* gg = pg ? pg->grad_buffer().data() : nullptr;
          T* gb = pb ? pb->grad_buffer().data() : nullptr;
          for (std::size_t idx = 0; idx < xhat.size(); ++idx) {
            const std::size_t ch = (idx / channel_stride) % channels;
            if (gg) gg[ch] += gy[idx] * xhat[idx];
            if (gb) gb[ch] += gy[idx];
          }
        }
      });
}

}  // namespace

template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps) {
  require(!x.shape().empty(), "layer_norm: scalar input");
  const std::size_t c = x.shape().back();
  return normalize<T>("layer_norm", x, x.size() / c, c, 1, c, gamma, beta, eps);
}

template <typename T>
Var<T> group_norm(const Var<T>& x, std::size_t groups, const Var<T>& gamma, const Var<T>& beta,
                  T eps) {
  require(x.shape().size() == 3, "group_norm: expects C x H x W");
  const std::size_t c = x.shape()[0], plane = x.shape()[1] * x.shape()[2];
  require(groups > 0 && c % groups == 0,
          "group_norm: " + std::to_string(c) + " channels not divisible into " +
              std::to_string(groups) + " groups");
  return normalize<T>("group_norm", x, groups, (c / groups) * plane, plane, c, gamma, beta, eps);
}

#define UNICT_INSTANTIATE_OPS(T)                                                              \
  template Var<T> add(const Var<T>&, const Var<T>&);                                          \
  template Var<T> sub(const Var<T>&, const Var<T>&);                                          \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                          \
  template Var<T> scale(const Var<T>&, T);                                                    \
  template Var<T> add_scalar(const Var<T>&, T);                                               \
  template Var<T> relu(const Var<T>&);                                                        \
  template Var<T> gelu(const Var<T>&);                                                        \
  template Var<T> sigmoid(const Var<T>&);                                                     \
  template Var<T> softplus(const Var<T>&);                                                    \
  template Var<T> abs(const Var<T>&);                                                         \
  template Var<T> square(const Var<T>&);                                                      \
  template Var<T> broadcast_to(const Var<T>&, const Shape&);                                  \
  template Var<T> reshape(const Var<T>&, const Shape&);                                       \
  template Var<T> permute(const Var<T>&, const std::vector<std::size_t>&);                    \
  template Var<T> transpose(const Var<T>&);                                                   \
  template Var<T> concat(const std::vector<Var<T>>&, std::size_t);                            \
  template Var<T> slice(const Var<T>&, std::size_t, std::size_t, std::size_t);               \
  template Var<T> gather_rows(const Var<T>&, const std::vector<std::size_t>&);                \
  template Var<T> window_partition(const Var<T>&, std::size_t, std::size_t, std::size_t,      \
                                   std::size_t);                                              \
  template Var<T> window_merge(const Var<T>&, std::size_t, std::size_t, std::size_t,          \
                               std::size_t);                                                  \
  template Var<T> matmul(const Var<T>&, const Var<T>&);                                       \
  template Var<T> bmm(const Var<T>&, const Var<T>&);                                          \
  template Var<T> linear(const Var<T>&, const Var<T>&, const Var<T>&);                        \
  template Var<T> conv2d(const Var<T>&, const Var<T>&, const Var<T>&, std::size_t,            \
                         std::size_t);                                                        \
  template Var<T> deconv2d(const Var<T>&, const Var<T>&, const Var<T>&, std::size_t,          \
                           std::size_t, std::size_t);                                         \
  template Var<T> channel_max(const Var<T>&);                                                 \
  template Var<T> channel_mean(const Var<T>&);                                                \
  template Var<T> sum(const Var<T>&);                                                         \
  template Var<T> mean(const Var<T>&);                                                        \
  template Var<T> softmax(const Var<T>&, std::size_t);                                        \
  template Var<T> layer_norm(const Var<T>&, const Var<T>&, const Var<T>&, T);                 \
  template Var<T> group_norm(const Var<T>&, std::size_t, const Var<T>&, const Var<T>&, T);

UNICT_INSTANTIATE_OPS(float)
UNICT_INSTANTIATE_OPS(double)

#undef UNICT_INSTANTIATE_OPS

}  // namespace unict::tensor
