// Copyright (c) 2026 Stagelab contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

namespace stagelab::kernels {

// Per-sample kernels. Batching, parallelism and gradient routing live in the
// graph executor; everything here is a plain function of its arguments.

struct ConvDims {
  int cin = 0, h = 0, w = 0;
  int cout = 0, kh = 0, kw = 0;
  int stride = 1, pad = 0;
  int oh() const { return (h + 2 * pad - kh) / stride + 1; }
  int ow() const { return (w + 2 * pad - kw) / stride + 1; }
};

template <typename R>
void conv2d_forward(const R* x, const R* weight, const R* bias, R* y, const ConvDims& d) {
  const int oh = d.oh(), ow = d.ow();
  for (int co = 0; co < d.cout; ++co) {
    const R* wco = weight + static_cast<std::size_t>(co) * d.cin * d.kh * d.kw;
    R* yco = y + static_cast<std::size_t>(co) * oh * ow;
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        R acc = bias[co];
        const int iy0 = oy * d.stride - d.pad;
        const int ix0 = ox * d.stride - d.pad;
        for (int ci = 0; ci < d.cin; ++ci) {
          const R* xc = x + static_cast<std::size_t>(ci) * d.h * d.w;
          const R* wc = wco + static_cast<std::size_t>(ci) * d.kh * d.kw;
          for (int ky = 0; ky < d.kh; ++ky) {
            const int iy = iy0 + ky;
            if (iy < 0 || iy >= d.h) continue;
            const R* xrow = xc + static_cast<std::size_t>(iy) * d.w;
            const R* wrow = wc + static_cast<std::size_t>(ky) * d.kw;
            for (int kx = 0; kx < d.kw; ++kx) {
              const int ix = ix0 + kx;
              if (ix < 0 || ix >= d.w) continue;
              acc += xrow[ix] * wrow[kx];
            }
          }
        }
        yco[static_cast<std::size_t>(oy) * ow + ox] = acc;
      }
    }
  }
}

/// dx, dweight and dbias may each be null when that gradient is not needed
/// (first layer, or a frozen conv). Non-null buffers accumulate (+=).
template <typename R>
void conv2d_backward(const R* x, const R* weight, const R* dy, R* dx, R* dweight, R* dbias,
                     const ConvDims& d) {
  const int oh = d.oh(), ow = d.ow();
  for (int co = 0; co < d.cout; ++co) {
    const R* wco = weight + static_cast<std::size_t>(co) * d.cin * d.kh * d.kw;
    R* dwco = dweight ? dweight + static_cast<std::size_t>(co) * d.cin * d.kh * d.kw : nullptr;
    const R* dyco = dy + static_cast<std::size_t>(co) * oh * ow;
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        const R g = dyco[static_cast<std::size_t>(oy) * ow + ox];
        if (g == R(0)) continue;
        if (dbias) dbias[co] += g;
        const int iy0 = oy * d.stride - d.pad;
        const int ix0 = ox * d.stride - d.pad;
        for (int ci = 0; ci < d.cin; ++ci) {
          const R* xc = x + static_cast<std::size_t>(ci) * d.h * d.w;
          R* dxc = dx ? dx + static_cast<std::size_t>(ci) * d.h * d.w : nullptr;
          const R* wc = wco + static_cast<std::size_t>(ci) * d.kh * d.kw;
          R* dwc = dwco ? dwco + static_cast<std::size_t>(ci) * d.kh * d.kw : nullptr;
          for (int ky = 0; ky < d.kh; ++ky) {
            const int iy = iy0 + ky;
            if (iy < 0 || iy >= d.h) continue;
            for (int kx = 0; kx < d.kw; ++kx) {
              const int ix = ix0 + kx;
              if (ix < 0 || ix >= d.w) continue;
              const std::size_t xi = static_cast<std::size_t>(iy) * d.w + ix;
              if (dwc) dwc[static_cast<std::size_t>(ky) * d.kw + kx] += g * xc[xi];
              if (dxc) dxc[xi] += g * wc[static_cast<std::size_t>(ky) * d.kw + kx];
            }
          }
        }
      }
    }
  }
}

/// Batch norm in inference form: per-channel affine with stored statistics.
template <typename R>
void batchnorm_forward(const R* x, const R* scale, const R* shift, const R* mean, const R* var,
                       R eps, R* y, int c, int hw) {
  for (int ch = 0; ch < c; ++ch) {
    const R inv = scale[ch] / std::sqrt(var[ch] + eps);
    const R off = shift[ch] - mean[ch] * inv;
    const R* xc = x + static_cast<std::size_t>(ch) * hw;
    R* yc = y + static_cast<std::size_t>(ch) * hw;
    for (int i = 0; i < hw; ++i) yc[i] = xc[i] * inv + off;
  }
}

template <typename R>
void batchnorm_backward(const R* dy, const R* scale, const R* var, R eps, R* dx, int c, int hw) {
  for (int ch = 0; ch < c; ++ch) {
    const R inv = scale[ch] / std::sqrt(var[ch] + eps);
    const R* dyc = dy + static_cast<std::size_t>(ch) * hw;
    R* dxc = dx + static_cast<std::size_t>(ch) * hw;
    for (int i = 0; i < hw; ++i) dxc[i] += dyc[i] * inv;
  }
}

template <typename R>
void relu_forward(const R* x, R* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > R(0) ? x[i] : R(0);
}

template <typename R>
void relu_backward(const R* x, const R* dy, R* dx, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i)
    if (x[i] > R(0)) dx[i] += dy[i];
}

struct PoolDims {
  int c = 0, h = 0, w = 0;
  int k = 3, stride = 2, pad = 1;
  int oh() const { return (h + 2 * pad - k) / stride + 1; }
  int ow() const { return (w + 2 * pad - k) / stride + 1; }
};

/// Max pool; writes the winning input index per output cell (first maximum
/// in scan order) so backward routes gradients deterministically.
template <typename R>
void maxpool_forward(const R* x, R* y, int* argmax, const PoolDims& d) {
  const int oh = d.oh(), ow = d.ow();
  for (int ch = 0; ch < d.c; ++ch) {
    const R* xc = x + static_cast<std::size_t>(ch) * d.h * d.w;
    R* yc = y + static_cast<std::size_t>(ch) * oh * ow;
    int* ac = argmax + static_cast<std::size_t>(ch) * oh * ow;
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        R best = R(0);
        int best_idx = -1;
        const int iy0 = oy * d.stride - d.pad;
        const int ix0 = ox * d.stride - d.pad;
        for (int ky = 0; ky < d.k; ++ky) {
          const int iy = iy0 + ky;
          if (iy < 0 || iy >= d.h) continue;
          for (int kx = 0; kx < d.k; ++kx) {
            const int ix = ix0 + kx;
            if (ix < 0 || ix >= d.w) continue;
            const int idx = iy * d.w + ix;
            if (best_idx < 0 || xc[idx] > best) {
              best = xc[idx];
              best_idx = idx;
            }
          }
        }
        yc[static_cast<std::size_t>(oy) * ow + ox] = best;
        ac[static_cast<std::size_t>(oy) * ow + ox] = best_idx;
      }
    }
  }
}

template <typename R>
void maxpool_backward(const R* dy, const int* argmax, R* dx, const PoolDims& d) {
  const int per_ch = d.oh() * d.ow();
  for (int ch = 0; ch < d.c; ++ch) {
    const R* dyc = dy + static_cast<std::size_t>(ch) * per_ch;
    const int* ac = argmax + static_cast<std::size_t>(ch) * per_ch;
    R* dxc = dx + static_cast<std::size_t>(ch) * d.h * d.w;
    for (int i = 0; i < per_ch; ++i)
      if (ac[i] >= 0) dxc[ac[i]] += dyc[i];
  }
}

template <typename R>
void global_avg_pool_forward(const R* x, R* y, int c, int hw) {
  for (int ch = 0; ch < c; ++ch) {
    R acc = R(0);
    const R* xc = x + static_cast<std::size_t>(ch) * hw;
    for (int i = 0; i < hw; ++i) acc += xc[i];
    y[ch] = acc / static_cast<R>(hw);
  }
}

template <typename R>
void global_avg_pool_backward(const R* dy, R* dx, int c, int hw) {
  for (int ch = 0; ch < c; ++ch) {
    const R g = dy[ch] / static_cast<R>(hw);
    R* dxc = dx + static_cast<std::size_t>(ch) * hw;
    for (int i = 0; i < hw; ++i) dxc[i] += g;
  }
}

/// y = W x + b with W stored (K, D) row-major.
template <typename R>
void dense_forward(const R* x, const R* weight, const R* bias, R* y, int d_in, int k) {
  for (int r = 0; r < k; ++r) {
    const R* wr = weight + static_cast<std::size_t>(r) * d_in;
    R acc = bias[r];
    for (int i = 0; i < d_in; ++i) acc += wr[i] * x[i];
    y[r] = acc;
  }
}

template <typename R>
void dense_backward(const R* x, const R* weight, const R* dy, R* dx, R* dweight, R* dbias,
                    int d_in, int k) {
  for (int r = 0; r < k; ++r) {
    const R g = dy[r];
    if (dbias) dbias[r] += g;
    const R* wr = weight + static_cast<std::size_t>(r) * d_in;
    R* dwr = dweight ? dweight + static_cast<std::size_t>(r) * d_in : nullptr;
    for (int i = 0; i < d_in; ++i) {
      if (dwr) dwr[i] += g * x[i];
      if (dx) dx[i] += g * wr[i];
    }
  }
}

template <typename R>
void add_forward(const R* a, const R* b, R* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = a[i] + b[i];
}

template <typename R>
R sigmoid_scalar(R z) {
  if (z >= R(0)) {
    const R e = std::exp(-z);
    return R(1) / (R(1) + e);
  }
  const R e = std::exp(z);
  return e / (R(1) + e);
}

template <typename R>
void sigmoid_forward(const R* x, R* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = sigmoid_scalar(x[i]);
}

template <typename R>
void sigmoid_backward(const R* y, const R* dy, R* dx, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dx[i] += dy[i] * y[i] * (R(1) - y[i]);
}

template <typename R>
void softmax_forward(const R* x, R* y, int k) {
  R mx = x[0];
  for (int i = 1; i < k; ++i) mx = std::max(mx, x[i]);
  R sum = R(0);
  for (int i = 0; i < k; ++i) {
    y[i] = std::exp(x[i] - mx);
    sum += y[i];
  }
  for (int i = 0; i < k; ++i) y[i] /= sum;
}

template <typename R>
void softmax_backward(const R* y, const R* dy, R* dx, int k) {
  R dot = R(0);
  for (int i = 0; i < k; ++i) dot += dy[i] * y[i];
  for (int i = 0; i < k; ++i) dx[i] += y[i] * (dy[i] - dot);
}

}  // namespace stagelab::kernels
