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

// Raw dense kernels shared by the differentiable ops and the frozen extractor.
// Layouts: activations (N, C, H, W); convolution weights (Co, Ci, K, K).

#include <algorithm>
#include <cstddef>
#include <span>

namespace flowclas::kernels {

struct ConvGeometry {
  std::size_t batch, in_channels, out_channels, in_h, in_w, kernel, stride, pad;

  std::size_t out_h() const { return (in_h + 2 * pad - kernel) / stride + 1; }
  std::size_t out_w() const { return (in_w + 2 * pad - kernel) / stride + 1; }
};

namespace detail {

// Output columns [lo, hi) whose input column ow*stride + k - pad lies inside [0, in).
inline void valid_range(std::size_t out, std::size_t in, std::size_t k, std::size_t stride,
                        std::size_t pad, std::size_t& lo, std::size_t& hi) {
  // ow*stride + k >= pad  and  ow*stride + k - pad < in
  lo = k >= pad ? 0 : (pad - k + stride - 1) / stride;
  const std::size_t limit = in + pad;  // ow*stride + k < limit
  hi = limit > k ? std::min(out, (limit - k + stride - 1) / stride) : 0;
  if (hi < lo) hi = lo;
}

}  // namespace detail

// out = conv(x, w) + b; out must be zero-initialised or hold values to accumulate onto.
template <typename T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> x, std::span<const T> w,
                    std::span<const T> b, std::span<T> out) {
  const std::size_t oh_n = g.out_h(), ow_n = g.out_w();
  const std::size_t in_plane = g.in_h * g.in_w, out_plane = oh_n * ow_n;
  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t co = 0; co < g.out_channels; ++co) {
      T* o = out.data() + (n * g.out_channels + co) * out_plane;
      if (!b.empty()) std::fill(o, o + out_plane, b[co]);
      for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
        const T* xi = x.data() + (n * g.in_channels + ci) * in_plane;
        const T* wk = w.data() + (co * g.in_channels + ci) * g.kernel * g.kernel;
        for (std::size_t kh = 0; kh < g.kernel; ++kh) {
          std::size_t h_lo, h_hi;
          detail::valid_range(oh_n, g.in_h, kh, g.stride, g.pad, h_lo, h_hi);
          for (std::size_t kw = 0; kw < g.kernel; ++kw) {
            const T wv = wk[kh * g.kernel + kw];
            std::size_t w_lo, w_hi;
            detail::valid_range(ow_n, g.in_w, kw, g.stride, g.pad, w_lo, w_hi);
            for (std::size_t oh = h_lo; oh < h_hi; ++oh) {
              const T* xr = xi + (oh * g.stride + kh - g.pad) * g.in_w;
              T* orow = o + oh * ow_n;
              if (g.stride == 1) {
                const T* xs = xr + kw - g.pad;
                for (std::size_t ow = w_lo; ow < w_hi; ++ow) orow[ow] += wv * xs[ow];
              } else {
                for (std::size_t ow = w_lo; ow < w_hi; ++ow) {
                  orow[ow] += wv * xr[ow * g.stride + kw - g.pad];
                }
              }
            }
          }
        }
      }
    }
  }
}

// Accumulates dL/dx, dL/dw and dL/db given dL/dout. Any of the outputs may be empty to skip it.
template <typename T>
void conv2d_backward(const ConvGeometry& g, std::span<const T> x, std::span<const T> w,
                     std::span<const T> gout, std::span<T> gx, std::span<T> gw, std::span<T> gb) {
  const std::size_t oh_n = g.out_h(), ow_n = g.out_w();
  const std::size_t in_plane = g.in_h * g.in_w, out_plane = oh_n * ow_n;
  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t co = 0; co < g.out_channels; ++co) {
      const T* go = gout.data() + (n * g.out_channels + co) * out_plane;
      if (!gb.empty()) {
        T acc = 0;
        for (std::size_t i = 0; i < out_plane; ++i) acc += go[i];
        gb[co] += acc;
      }
      for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
        const std::size_t xoff = (n * g.in_channels + ci) * in_plane;
        const std::size_t woff = (co * g.in_channels + ci) * g.kernel * g.kernel;
        for (std::size_t kh = 0; kh < g.kernel; ++kh) {
          std::size_t h_lo, h_hi;
          detail::valid_range(oh_n, g.in_h, kh, g.stride, g.pad, h_lo, h_hi);
          for (std::size_t kw = 0; kw < g.kernel; ++kw) {
            std::size_t w_lo, w_hi;
            detail::valid_range(ow_n, g.in_w, kw, g.stride, g.pad, w_lo, w_hi);
            const T wv = w[woff + kh * g.kernel + kw];
            T wacc = 0;
            for (std::size_t oh = h_lo; oh < h_hi; ++oh) {
              const std::size_t row = xoff + (oh * g.stride + kh - g.pad) * g.in_w;
              const T* grow = go + oh * ow_n;
              for (std::size_t ow = w_lo; ow < w_hi; ++ow) {
                const std::size_t xi = row + ow * g.stride + kw - g.pad;
                if (!gw.empty()) wacc += grow[ow] * x[xi];
                if (!gx.empty()) gx[xi] += grow[ow] * wv;
              }
            }
            if (!gw.empty()) gw[woff + kh * g.kernel + kw] += wacc;
          }
        }
      }
    }
  }
}

// c (m x n) += a (m x k) * b, where b is (k x n), or (n x k) when transpose_b.
template <typename T>
void matmul(std::size_t m, std::size_t k, std::size_t n, std::span<const T> a, std::span<const T> b,
            bool transpose_b, std::span<T> c) {
  if (transpose_b) {
    for (std::size_t i = 0; i < m; ++i) {
      const T* ar = a.data() + i * k;
      for (std::size_t j = 0; j < n; ++j) {
        const T* br = b.data() + j * k;
        T acc = 0;
        for (std::size_t p = 0; p < k; ++p) acc += ar[p] * br[p];
        c[i * n + j] += acc;
      }
    }
  } else {
    for (std::size_t i = 0; i < m; ++i) {
      T* cr = c.data() + i * n;
      for (std::size_t p = 0; p < k; ++p) {
        const T av = a[i * k + p];
        const T* br = b.data() + p * n;
        for (std::size_t j = 0; j < n; ++j) cr[j] += av * br[j];
      }
    }
  }
}

}  // namespace flowclas::kernels
