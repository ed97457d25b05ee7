// Copyright (c) 2026 Stagelab contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "stagelab/common.hpp"

namespace stagelab {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i != 0) s += ",";
    s += std::to_string(shape[i]);
  }
  s += ")";
  return s;
}

/// Dense row-major tensor. Feature maps are (C,H,W) per sample or (N,C,H,W)
/// batched; vectors are (D) or (N,D).
template <typename R>
struct Tensor {
  Shape shape;
  std::vector<R> data;

  Tensor() = default;
  explicit Tensor(Shape s) : shape(std::move(s)), data(numel(shape), R(0)) {}
  Tensor(Shape s, std::vector<R> values) : shape(std::move(s)), data(std::move(values)) {
    if (data.size() != numel(shape))
      raise(concat("tensor data length ", data.size(), " does not match shape ", shape_str(shape)));
  }

  std::size_t size() const { return data.size(); }
  R* ptr() { return data.data(); }
  const R* ptr() const { return data.data(); }
  R& operator[](std::size_t i) { return data[i]; }
  const R& operator[](std::size_t i) const { return data[i]; }

  void fill(R v) { std::fill(data.begin(), data.end(), v); }
  void zero() { fill(R(0)); }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }
};

template <typename R>
bool all_finite(const Tensor<R>& t) {
  for (R v : t.data)
    if (!std::isfinite(v)) return false;
  return true;
}

template <typename To, typename From>
Tensor<To> cast_tensor(const Tensor<From>& t) {
  Tensor<To> out(t.shape);
  for (std::size_t i = 0; i < t.size(); ++i) out.data[i] = static_cast<To>(t.data[i]);
  return out;
}

}  // namespace stagelab
