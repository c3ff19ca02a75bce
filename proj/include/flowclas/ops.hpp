/*
 * Copyright 2026 The flowclas Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

// Differentiable primitives. Binary elementwise ops broadcast numpy-style
// (shapes right-aligned, size-1 axes stretch); all tensors have rank <= 4.

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "flowclas/autodiff.hpp"
#include "flowclas/kernels.hpp"

namespace flowclas {

namespace detail {

template <typename T>
Tape<T>& same_tape(const Var<T>& a, const Var<T>& b, const char* op) {
  if (a.tape() == nullptr || a.tape() != b.tape()) throw Error(std::string(op) + ": operands on different tapes");
  return *a.tape();
}

inline std::array<std::size_t, 4> pad4(const Shape& s) {
  std::array<std::size_t, 4> out{1, 1, 1, 1};
  const std::size_t off = 4 - s.size();
  for (std::size_t i = 0; i < s.size(); ++i) out[off + i] = s[i];
  return out;
}

struct Broadcast {
  Shape out_shape;
  std::array<std::size_t, 4> dims;
  std::array<std::size_t, 4> stride_a, stride_b;
};

inline Broadcast broadcast(const Shape& a, const Shape& b, const char* op) {
  if (a.size() > 4 || b.size() > 4) throw ShapeError(std::string(op) + ": rank above 4");
  const auto pa = pad4(a), pb = pad4(b);
  Broadcast bc{};
  for (std::size_t i = 0; i < 4; ++i) {
    if (pa[i] != pb[i] && pa[i] != 1 && pb[i] != 1) {
      throw ShapeError(std::string(op) + ": cannot broadcast " + shape_string(a) + " with " + shape_string(b));
    }
    bc.dims[i] = std::max(pa[i], pb[i]);
  }
  std::size_t sa = 1, sb = 1;
  for (std::size_t i = 4; i-- > 0;) {
    bc.stride_a[i] = pa[i] == 1 ? 0 : sa;
    bc.stride_b[i] = pb[i] == 1 ? 0 : sb;
    sa *= pa[i];
    sb *= pb[i];
  }
  const std::size_t rank = std::max(a.size(), b.size());
  bc.out_shape.assign(bc.dims.begin() + (4 - rank), bc.dims.end());
  return bc;
}

// Calls f(out_index, a_index, b_index) over the broadcast iteration space.
template <typename F>
void for_each_broadcast(const Broadcast& bc, F&& f) {
  std::size_t k = 0;
  for (std::size_t i0 = 0; i0 < bc.dims[0]; ++i0)
    for (std::size_t i1 = 0; i1 < bc.dims[1]; ++i1)
      for (std::size_t i2 = 0; i2 < bc.dims[2]; ++i2) {
        const std::size_t ra = i0 * bc.stride_a[0] + i1 * bc.stride_a[1] + i2 * bc.stride_a[2];
        const std::size_t rb = i0 * bc.stride_b[0] + i1 * bc.stride_b[1] + i2 * bc.stride_b[2];
        for (std::size_t i3 = 0; i3 < bc.dims[3]; ++i3, ++k) {
          f(k, ra + i3 * bc.stride_a[3], rb + i3 * bc.stride_b[3]);
        }
      }
}

enum class BinaryKind { kAdd, kSub, kMul };

template <typename T>
Var<T> binary(const Var<T>& a, const Var<T>& b, BinaryKind kind, const char* op) {
  Tape<T>& tape = same_tape(a, b, op);
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  Broadcast bc = broadcast(av.shape(), bv.shape(), op);
  Tensor<T> out(bc.out_shape);
  const bool same = av.shape() == bv.shape();
  if (same) {
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] = kind == BinaryKind::kAdd ? av[i] + bv[i] : kind == BinaryKind::kSub ? av[i] - bv[i] : av[i] * bv[i];
    }
  } else {
    for_each_broadcast(bc, [&](std::size_t k, std::size_t ia, std::size_t ib) {
      out[k] = kind == BinaryKind::kAdd ? av[ia] + bv[ib] : kind == BinaryKind::kSub ? av[ia] - bv[ib] : av[ia] * bv[ib];
    });
  }
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(op, std::move(out), {ia, ib}, [ia, ib, bc, kind](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = t.grad(self);
    const bool need_a = t.requires_grad(ia), need_b = t.requires_grad(ib);
    Tensor<T>* ga = need_a ? &t.grad(ia) : nullptr;
    Tensor<T>* gb = need_b ? &t.grad(ib) : nullptr;
    const Tensor<T>& av = t.value(ia);
    const Tensor<T>& bv = t.value(ib);
    for_each_broadcast(bc, [&](std::size_t k, std::size_t xa, std::size_t xb) {
      switch (kind) {
        case BinaryKind::kAdd:
          if (ga) (*ga)[xa] += g[k];
          if (gb) (*gb)[xb] += g[k];
          break;
        case BinaryKind::kSub:
          if (ga) (*ga)[xa] += g[k];
          if (gb) (*gb)[xb] -= g[k];
          break;
        case BinaryKind::kMul:
          if (ga) (*ga)[xa] += g[k] * bv[xb];
          if (gb) (*gb)[xb] += g[k] * av[xa];
          break;
      }
    });
  });
}

// Elementwise unary op; `deriv(x, y)` returns dy/dx.
template <typename T, typename F, typename D>
Var<T> unary(const Var<T>& x, const char* op, F f, D deriv) {
  Tape<T>& tape = *x.tape();
  const Tensor<T>& xv = x.value();
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xv[i]);
  const std::size_t ix = x.id();
  return tape.record(op, std::move(out), {ix}, [ix, deriv](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = t.grad(self);
    const Tensor<T>& xv = t.value(ix);
    const Tensor<T>& yv = t.value(self);
    Tensor<T>& gx = t.grad(ix);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * deriv(xv[i], yv[i]);
  });
}

}  // namespace detail

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  return detail::binary(a, b, detail::BinaryKind::kAdd, "add");
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  return detail::binary(a, b, detail::BinaryKind::kSub, "sub");
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  return detail::binary(a, b, detail::BinaryKind::kMul, "mul");
}

// x * c for a constant c.
template <typename T>
Var<T> scale(const Var<T>& x, T c) {
  return detail::unary(x, "scale", [c](T v) { return v * c; }, [c](T, T) { return c; });
}

// x + c for a constant c.
template <typename T>
Var<T> shift(const Var<T>& x, T c) {
  return detail::unary(x, "shift", [c](T v) { return v + c; }, [](T, T) { return T(1); });
}

template <typename T>
Var<T> exp(const Var<T>& x) {
  return detail::unary(x, "exp", [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <typename T>
Var<T> log(const Var<T>& x) {
  return detail::unary(x, "log", [](T v) { return std::log(v); }, [](T v, T) { return T(1) / v; });
}

template <typename T>
Var<T> tanh(const Var<T>& x) {
  return detail::unary(x, "tanh", [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
  return detail::unary(x, "relu", [](T v) { return v > T(0) ? v : T(0); },
                       [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

// Sum of all elements into a shape-[1] tensor, accumulated in 64 bits.
template <typename T>
Var<T> sum(const Var<T>& x) {
  double acc = 0.0;
  for (T v : x.value().data()) acc += static_cast<double>(v);
  const std::size_t ix = x.id();
  return x.tape()->record("sum", Tensor<T>::scalar(static_cast<T>(acc)), {ix}, [ix](Tape<T>& t, std::size_t self) {
    const T g = t.grad(self)[0];
    Tensor<T>& gx = t.grad(ix);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
  });
}

template <typename T>
Var<T> mean(const Var<T>& x) {
  const std::size_t n = x.value().size();
  if (n == 0) throw ShapeError("mean: empty tensor");
  double acc = 0.0;
  for (T v : x.value().data()) acc += static_cast<double>(v);
  const std::size_t ix = x.id();
  return x.tape()->record("mean", Tensor<T>::scalar(static_cast<T>(acc / static_cast<double>(n))), {ix},
                          [ix, n](Tape<T>& t, std::size_t self) {
                            const T g = t.grad(self)[0] / static_cast<T>(n);
                            Tensor<T>& gx = t.grad(ix);
                            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
                          });
}

// Sum over one axis, keeping it with size 1. 64-bit accumulation.
template <typename T>
Var<T> sum_axis(const Var<T>& x, std::size_t axis) {
  const Shape& s = x.shape();
  if (axis >= s.size()) throw ShapeError("sum_axis: axis " + std::to_string(axis) + " out of range for " + shape_string(s));
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t len = s[axis];
  Shape os = s;
  os[axis] = 1;
  Tensor<T> out(os);
  const Tensor<T>& xv = x.value();
  std::vector<double> acc(inner);
  for (std::size_t o = 0; o < outer; ++o) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t l = 0; l < len; ++l) {
      const T* row = xv.data().data() + (o * len + l) * inner;
      for (std::size_t i = 0; i < inner; ++i) acc[i] += static_cast<double>(row[i]);
    }
    for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] = static_cast<T>(acc[i]);
  }
  const std::size_t ix = x.id();
  return x.tape()->record("sum_axis", std::move(out), {ix}, [ix, outer, inner, len](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = t.grad(self);
    Tensor<T>& gx = t.grad(ix);
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t l = 0; l < len; ++l)
        for (std::size_t i = 0; i < inner; ++i) gx[(o * len + l) * inner + i] += g[o * inner + i];
  });
}

// (m x k) * (k x n), or (m x k) * (n x k)^T when transpose_b.
template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b, bool transpose_b = false) {
  Tape<T>& tape = detail::same_tape(a, b, "matmul");
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() != 2 || sb.size() != 2) {
    throw ShapeError("matmul: expected rank-2 operands, got " + shape_string(sa) + " and " + shape_string(sb));
  }
  const std::size_t m = sa[0], k = sa[1];
  const std::size_t kb = transpose_b ? sb[1] : sb[0];
  const std::size_t n = transpose_b ? sb[0] : sb[1];
  if (k != kb) {
    throw ShapeError("matmul: inner dimensions differ, " + shape_string(sa) + (transpose_b ? " x T" : " x ") + shape_string(sb));
  }
  Tensor<T> out(Shape{m, n});
  kernels::matmul<T>(m, k, n, a.value().data(), b.value().data(), transpose_b, out.data());
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record("matmul", std::move(out), {ia, ib}, [=](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = t.grad(self);  // m x n
    const Tensor<T>& av = t.value(ia);
    const Tensor<T>& bv = t.value(ib);
    if (t.requires_grad(ia)) {
      Tensor<T>& ga = t.grad(ia);  // m x k
      // dA = G * B^T (B is k x n) or G * B (B is n x k)
      kernels::matmul<T>(m, n, k, g.data(), bv.data(), !transpose_b, ga.data());
    }
    if (t.requires_grad(ib)) {
      Tensor<T>& gb = t.grad(ib);
      if (transpose_b) {
        // dB (n x k) = G^T * A
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) {
            const T gv = g[i * n + j];
            for (std::size_t p = 0; p < k; ++p) gb[j * k + p] += gv * av[i * k + p];
          }
      } else {
        // dB (k x n) = A^T * G
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            const T avv = av[i * k + p];
            for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += avv * g[i * n + j];
          }
      }
    }
  });
}

namespace detail {

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, std::size_t kernel, const char* op) {
  Tape<T>& tape = same_tape(x, w, op);
  same_tape(x, b, op);
  const Shape& sx = x.shape();
  const Shape& sw = w.shape();
  if (sx.size() != 4 || sw.size() != 4 || sw[2] != kernel || sw[3] != kernel || sw[1] != sx[1] ||
      b.value().size() != sw[0]) {
    throw ShapeError(std::string(op) + ": input " + shape_string(sx) + ", weight " + shape_string(sw) + ", bias " +
                     shape_string(b.shape()));
  }
  const kernels::ConvGeometry geo{sx[0], sx[1], sw[0], sx[2], sx[3], kernel, 1, kernel / 2};
  Tensor<T> out(Shape{sx[0], sw[0], geo.out_h(), geo.out_w()});
  kernels::conv2d_forward<T>(geo, x.value().data(), w.value().data(), b.value().data(), out.data());
  const std::size_t ix = x.id(), iw = w.id(), ib = b.id();
  return tape.record(op, std::move(out), {ix, iw, ib}, [=](Tape<T>& t, std::size_t self) {
    std::span<T> gx, gw, gb;
    if (t.requires_grad(ix)) gx = t.grad(ix).data();
    if (t.requires_grad(iw)) gw = t.grad(iw).data();
    if (t.requires_grad(ib)) gb = t.grad(ib).data();
    kernels::conv2d_backward<T>(geo, t.value(ix).data(), t.value(iw).data(), t.grad(self).data(), gx, gw, gb);
  });
}

}  // namespace detail

// Pointwise convolution. w: (Co, Ci, 1, 1), b: (Co).
template <typename T>
Var<T> conv2d_1x1(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  return detail::conv2d(x, w, b, 1, "conv2d_1x1");
}

// 3x3 convolution, stride 1, zero padding 1. w: (Co, Ci, 3, 3), b: (Co).
template <typename T>
Var<T> conv2d_3x3(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  return detail::conv2d(x, w, b, 3, "conv2d_3x3");
}

// Divides every channel vector (axis 1) by its L2 norm, floored at `eps`.
// Accepts (N, C) and (N, C, H, W).
template <typename T>
Var<T> l2_normalize_channelwise(const Var<T>& x, T eps = T(1e-12)) {
  const Shape& s = x.shape();
  if (s.size() != 2 && s.size() != 4) throw ShapeError("l2_normalize_channelwise: expected rank 2 or 4, got " + shape_string(s));
  const std::size_t n = s[0], c = s[1];
  const std::size_t plane = s.size() == 4 ? s[2] * s[3] : 1;
  const Tensor<T>& xv = x.value();
  Tensor<T> out(s);
  std::vector<T> norms(n * plane);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t p = 0; p < plane; ++p) {
      double sq = 0.0;
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double v = xv[(b * c + ch) * plane + p];
        sq += v * v;
      }
      const T norm = std::max(static_cast<T>(std::sqrt(sq)), eps);
      norms[b * plane + p] = norm;
      for (std::size_t ch = 0; ch < c; ++ch) out[(b * c + ch) * plane + p] = xv[(b * c + ch) * plane + p] / norm;
    }
  const std::size_t ix = x.id();
  return x.tape()->record("l2_normalize_channelwise", std::move(out), {ix},
                          [ix, n, c, plane, eps, norms = std::move(norms)](Tape<T>& t, std::size_t self) {
                            const Tensor<T>& g = t.grad(self);
                            const Tensor<T>& y = t.value(self);
                            Tensor<T>& gx = t.grad(ix);
                            for (std::size_t b = 0; b < n; ++b)
                              for (std::size_t p = 0; p < plane; ++p) {
                                const T norm = norms[b * plane + p];
                                const bool floored = !(norm > eps);
                                double dot = 0.0;
                                if (!floored) {
                                  for (std::size_t ch = 0; ch < c; ++ch) {
                                    const std::size_t k = (b * c + ch) * plane + p;
                                    dot += static_cast<double>(g[k]) * y[k];
                                  }
                                }
                                for (std::size_t ch = 0; ch < c; ++ch) {
                                  const std::size_t k = (b * c + ch) * plane + p;
                                  gx[k] += (g[k] - static_cast<T>(dot) * y[k]) / norm;
                                }
                              }
                          });
}

// Flat pixel index n * H * W + h * W + w into an (N, C, H, W) map.
using PixelIndex = std::size_t;

// Gathers the channel vectors of the listed pixels into an (M, C) sample list.
template <typename T>
Var<T> gather_pixels(const Var<T>& x, const std::vector<PixelIndex>& pixels) {
  const Shape& s = x.shape();
  if (s.size() != 4) throw ShapeError("gather_pixels: expected rank 4, got " + shape_string(s));
  const std::size_t c = s[1], plane = s[2] * s[3], total = s[0] * plane;
  Tensor<T> out(Shape{pixels.size(), c});
  const Tensor<T>& xv = x.value();
  for (std::size_t m = 0; m < pixels.size(); ++m) {
    if (pixels[m] >= total) throw ShapeError("gather_pixels: pixel " + std::to_string(pixels[m]) + " outside " + shape_string(s));
    const std::size_t b = pixels[m] / plane, p = pixels[m] % plane;
    for (std::size_t ch = 0; ch < c; ++ch) out[m * c + ch] = xv[(b * c + ch) * plane + p];
  }
  const std::size_t ix = x.id();
  return x.tape()->record("gather_mask", std::move(out), {ix}, [ix, c, plane, pixels](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = t.grad(self);
    Tensor<T>& gx = t.grad(ix);
    for (std::size_t m = 0; m < pixels.size(); ++m) {
      const std::size_t b = pixels[m] / plane, p = pixels[m] % plane;
      for (std::size_t ch = 0; ch < c; ++ch) gx[(b * c + ch) * plane + p] += g[m * c + ch];
    }
  });
}

// Pixel indices where an (N, 1, H, W) or (N, H, W) binary mask equals `value`.
template <typename T>
std::vector<PixelIndex> mask_pixels(const Tensor<T>& mask, bool value = true) {
  std::vector<PixelIndex> out;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if ((mask[i] > T(0.5)) == value) out.push_back(i);
  }
  return out;
}

// Selects the pixels where the binary mask is 1 into an (M, C) sample list.
template <typename T>
Var<T> gather_mask(const Var<T>& x, const Tensor<T>& mask) {
  const Shape& s = x.shape();
  if (s.size() != 4 || mask.size() != s[0] * s[2] * s[3]) {
    throw ShapeError("gather_mask: map " + shape_string(s) + " vs mask " + shape_string(mask.shape()));
  }
  return gather_pixels(x, mask_pixels(mask));
}

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  Tensor<T> out = x.value().reshaped(std::move(shape));
  const std::size_t ix = x.id();
  return x.tape()->record("reshape", std::move(out), {ix}, [ix](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = t.grad(self);
    Tensor<T>& gx = t.grad(ix);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

// Channels [begin, end) along axis 1.
template <typename T>
Var<T> slice_channels(const Var<T>& x, std::size_t begin, std::size_t end) {
  const Shape& s = x.shape();
  if (s.size() < 2 || begin > end || end > s[1]) {
    throw ShapeError("slice_channels: [" + std::to_string(begin) + "," + std::to_string(end) + ") of " + shape_string(s));
  }
  std::size_t inner = 1;
  for (std::size_t i = 2; i < s.size(); ++i) inner *= s[i];
  const std::size_t c = s[1], n = s[0], w = end - begin;
  Shape os = s;
  os[1] = w;
  Tensor<T> out(os);
  const Tensor<T>& xv = x.value();
  for (std::size_t b = 0; b < n; ++b)
    std::copy_n(xv.data().data() + (b * c + begin) * inner, w * inner, out.data().data() + b * w * inner);
  const std::size_t ix = x.id();
  return x.tape()->record("slice_channels", std::move(out), {ix}, [=](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = t.grad(self);
    Tensor<T>& gx = t.grad(ix);
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t i = 0; i < w * inner; ++i) gx[(b * c + begin) * inner + i] += g[b * w * inner + i];
  });
}

// Rows [begin, end) along axis 0.
template <typename T>
Var<T> slice_rows(const Var<T>& x, std::size_t begin, std::size_t end) {
  const Shape& s = x.shape();
  if (s.empty() || begin > end || end > s[0]) {
    throw ShapeError("slice_rows: [" + std::to_string(begin) + "," + std::to_string(end) + ") of " + shape_string(s));
  }
  const std::size_t row = x.value().size() / s[0];
  Shape os = s;
  os[0] = end - begin;
  Tensor<T> out(os);
  std::copy_n(x.value().data().data() + begin * row, (end - begin) * row, out.data().data());
  const std::size_t ix = x.id();
  return x.tape()->record("slice_rows", std::move(out), {ix}, [=](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = t.grad(self);
    Tensor<T>& gx = t.grad(ix);
    for (std::size_t i = 0; i < g.size(); ++i) gx[begin * row + i] += g[i];
  });
}

// Concatenation along axis 0 (rows) or axis 1 (channels).
template <typename T>
Var<T> concat(const std::vector<Var<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no operands");
  if (axis > 1) throw ShapeError("concat: only axes 0 and 1 are supported");
  Tape<T>& tape = *parts.front().tape();
  const Shape& s0 = parts.front().shape();
  if (s0.size() <= axis) throw ShapeError("concat: axis out of range for " + shape_string(s0));
  Shape os = s0;
  os[axis] = 0;
  std::vector<std::size_t> ids, widths;
  for (const Var<T>& p : parts) {
    if (p.tape() != &tape) throw Error("concat: operands on different tapes");
    Shape s = p.shape();
    if (s.size() != s0.size()) throw ShapeError("concat: rank mismatch " + shape_string(s0) + " vs " + shape_string(s));
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i != axis && s[i] != s0[i]) throw ShapeError("concat: " + shape_string(s0) + " vs " + shape_string(s));
    }
    os[axis] += s[axis];
    ids.push_back(p.id());
    widths.push_back(s[axis]);
  }
  std::size_t inner = 1;
  for (std::size_t i = axis + 1; i < os.size(); ++i) inner *= os[i];
  const std::size_t outer = axis == 0 ? 1 : os[0];
  const std::size_t total = os[axis];
  Tensor<T> out(os);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor<T>& pv = parts[k].value();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(pv.data().data() + o * widths[k] * inner, widths[k] * inner,
                  out.data().data() + (o * total + offset) * inner);
    offset += widths[k];
  }
  return tape.record("concat", std::move(out), ids, [=](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = t.grad(self);
    std::size_t off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (t.requires_grad(ids[k])) {
        Tensor<T>& gp = t.grad(ids[k]);
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t i = 0; i < widths[k] * inner; ++i) gp[o * widths[k] * inner + i] += g[(o * total + off) * inner + i];
      }
      off += widths[k];
    }
  });
}

// out channel c = x channel perm[c].
template <typename T>
Var<T> permute_channels(const Var<T>& x, const std::vector<std::size_t>& perm) {
  const Shape& s = x.shape();
  if (s.size() < 2 || perm.size() != s[1]) {
    throw ShapeError("permute_channels: permutation of size " + std::to_string(perm.size()) + " for " + shape_string(s));
  }
  std::size_t inner = 1;
  for (std::size_t i = 2; i < s.size(); ++i) inner *= s[i];
  const std::size_t c = s[1], n = s[0];
  Tensor<T> out(s);
  const Tensor<T>& xv = x.value();
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch)
      std::copy_n(xv.data().data() + (b * c + perm[ch]) * inner, inner, out.data().data() + (b * c + ch) * inner);
  const std::size_t ix = x.id();
  return x.tape()->record("permute_channels", std::move(out), {ix}, [=](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = t.grad(self);
    Tensor<T>& gx = t.grad(ix);
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < inner; ++i) gx[(b * c + perm[ch]) * inner + i] += g[(b * c + ch) * inner + i];
  });
}

}  // namespace flowclas
