// Copyright (c) 2026 Stagelab contributors
// SPDX-License-Identifier: Apache-2.0
//
// Test-only straight-line forward reference. Implements every layer as a
// standalone function with double accumulators and composes the nano
// backbone by hand, without touching the graph executor. Weights are read
// from a ParameterStore by name, so the compute path is the only thing
// shared with the implementation under test.
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "stagelab/param.hpp"

namespace refnet {

struct Map {
  int c = 0, h = 0, w = 0;
  std::vector<double> v;  // (C,H,W) row-major
};

inline Map conv(const Map& x, const std::vector<double>& weight, const std::vector<double>& bias,
                int co, int k, int stride, int pad) {
  Map y;
  y.c = co;
  y.h = (x.h + 2 * pad - k) / stride + 1;
  y.w = (x.w + 2 * pad - k) / stride + 1;
  y.v.assign(static_cast<std::size_t>(co) * y.h * y.w, 0.0);
  for (int oc = 0; oc < co; ++oc)
    for (int oy = 0; oy < y.h; ++oy)
      for (int ox = 0; ox < y.w; ++ox) {
        double acc = bias[oc];
        for (int ic = 0; ic < x.c; ++ic)
          for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
              const int iy = oy * stride + ky - pad;
              const int ix = ox * stride + kx - pad;
              if (iy < 0 || iy >= x.h || ix < 0 || ix >= x.w) continue;
              acc += x.v[(static_cast<std::size_t>(ic) * x.h + iy) * x.w + ix] *
                     weight[((static_cast<std::size_t>(oc) * x.c + ic) * k + ky) * k + kx];
            }
        y.v[(static_cast<std::size_t>(oc) * y.h + oy) * y.w + ox] = acc;
      }
  return y;
}

inline Map batchnorm(const Map& x, const std::vector<double>& scale,
                     const std::vector<double>& shift, const std::vector<double>& mean,
                     const std::vector<double>& var, double eps = 1e-5) {
  Map y = x;
  for (int c = 0; c < x.c; ++c) {
    const double inv = scale[c] / std::sqrt(var[c] + eps);
    for (int i = 0; i < x.h * x.w; ++i) {
      auto& px = y.v[static_cast<std::size_t>(c) * x.h * x.w + i];
      px = (px - mean[c]) * inv + shift[c];
    }
  }
  return y;
}

inline Map relu(const Map& x) {
  Map y = x;
  for (auto& v : y.v) v = v > 0 ? v : 0;
  return y;
}

inline Map maxpool3s2p1(const Map& x) {
  Map y;
  y.c = x.c;
  y.h = (x.h + 2 - 3) / 2 + 1;
  y.w = (x.w + 2 - 3) / 2 + 1;
  y.v.assign(static_cast<std::size_t>(y.c) * y.h * y.w, 0.0);
  for (int c = 0; c < x.c; ++c)
    for (int oy = 0; oy < y.h; ++oy)
      for (int ox = 0; ox < y.w; ++ox) {
        double best = 0.0;
        bool seen = false;
        for (int ky = 0; ky < 3; ++ky)
          for (int kx = 0; kx < 3; ++kx) {
            const int iy = oy * 2 + ky - 1;
            const int ix = ox * 2 + kx - 1;
            if (iy < 0 || iy >= x.h || ix < 0 || ix >= x.w) continue;
            const double v = x.v[(static_cast<std::size_t>(c) * x.h + iy) * x.w + ix];
            if (!seen || v > best) {
              best = v;
              seen = true;
            }
          }
        y.v[(static_cast<std::size_t>(c) * y.h + oy) * y.w + ox] = best;
      }
  return y;
}

inline Map add(const Map& a, const Map& b) {
  Map y = a;
  for (std::size_t i = 0; i < y.v.size(); ++i) y.v[i] += b.v[i];
  return y;
}

inline std::vector<double> gap(const Map& x) {
  std::vector<double> out(static_cast<std::size_t>(x.c), 0.0);
  for (int c = 0; c < x.c; ++c) {
    double acc = 0;
    for (int i = 0; i < x.h * x.w; ++i) acc += x.v[static_cast<std::size_t>(c) * x.h * x.w + i];
    out[static_cast<std::size_t>(c)] = acc / (x.h * x.w);
  }
  return out;
}

inline std::vector<double> dense(const std::vector<double>& x, const std::vector<double>& weight,
                                 const std::vector<double>& bias, int k) {
  std::vector<double> y(static_cast<std::size_t>(k), 0.0);
  const int d = static_cast<int>(x.size());
  for (int r = 0; r < k; ++r) {
    double acc = bias[r];
    for (int i = 0; i < d; ++i) acc += weight[static_cast<std::size_t>(r) * d + i] * x[i];
    y[static_cast<std::size_t>(r)] = acc;
  }
  return y;
}

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

template <typename R>
std::vector<double> values(const stagelab::ParameterStore<R>& store, const std::string& name) {
  const auto& t = store.get(name).value;
  return std::vector<double>(t.data.begin(), t.data.end());
}

/// Hand-written nano backbone: widths /8, input 3x64x64, stride on the
/// first 1x1 conv of each conv_block's trunk and on its projection.
template <typename R>
double nano_forward_sigmoid(const stagelab::ParameterStore<R>& store,
                            const std::vector<double>& image_chw) {
  using std::to_string;
  Map x;
  x.c = 3;
  x.h = 64;
  x.w = 64;
  x.v = image_chw;

  auto bn_of = [&](const Map& in, const std::string& p) {
    return batchnorm(in, values(store, p + ".scale"), values(store, p + ".shift"),
                     values(store, p + ".moving_mean"), values(store, p + ".moving_var"));
  };
  auto conv_of = [&](const Map& in, const std::string& p, int co, int k, int stride, int pad) {
    return conv(in, values(store, p + ".weight"), values(store, p + ".bias"), co, k, stride, pad);
  };

  x = relu(bn_of(conv_of(x, "stem.conv", 8, 7, 2, 3), "stem.bn"));
  x = maxpool3s2p1(x);

  const int mids[4] = {8, 16, 32, 64};
  const int outs[4] = {32, 64, 128, 256};
  const int blocks[4] = {3, 4, 6, 3};
  const int strides[4] = {1, 2, 2, 2};
  for (int s = 0; s < 4; ++s) {
    for (int b = 0; b < blocks[s]; ++b) {
      const std::string p = "stage" + to_string(s + 1) + ".block" + to_string(b);
      const bool conv_block = b == 0;
      const int stride = conv_block ? strides[s] : 1;
      Map t = relu(bn_of(conv_of(x, p + ".conv1", mids[s], 1, stride, 0), p + ".bn1"));
      t = relu(bn_of(conv_of(t, p + ".conv2", mids[s], 3, 1, 1), p + ".bn2"));
      t = bn_of(conv_of(t, p + ".conv3", outs[s], 1, 1, 0), p + ".bn3");
      Map shortcut = conv_block
                         ? bn_of(conv_of(x, p + ".proj", outs[s], 1, stride, 0), p + ".proj_bn")
                         : x;
      x = relu(add(t, shortcut));
    }
  }

  const std::vector<double> pooled = gap(x);
  const std::vector<double> logit =
      dense(pooled, values(store, "head.dense.weight"), values(store, "head.dense.bias"), 1);
  return sigmoid(logit[0]);
}

}  // namespace refnet
