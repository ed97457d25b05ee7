// Copyright (c) 2026 Stagelab contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>

namespace stagelab {

enum class LossKind { bce, cce };

namespace detail {
template <typename R>
constexpr R prob_floor() {
  if constexpr (sizeof(R) == 4)
    return R(1e-7);
  else
    return R(1e-12);
}
}  // namespace detail

/// Binary cross entropy of one sample. p is the predicted probability,
/// y in {0,1}. Probabilities are clamped away from 0/1 so the loss and
/// its gradient stay finite.
template <typename R>
R bce_loss(R p, R y) {
  const R eps = detail::prob_floor<R>();
  p = std::clamp(p, eps, R(1) - eps);
  return -(y * std::log(p) + (R(1) - y) * std::log(R(1) - p));
}

/// Categorical cross entropy of one sample against a one-hot row.
template <typename R>
R cce_loss(const R* p, const R* y, int k) {
  const R eps = detail::prob_floor<R>();
  R loss = R(0);
  for (int i = 0; i < k; ++i) {
    if (y[i] == R(0)) continue;
    loss -= y[i] * std::log(std::max(p[i], eps));
  }
  return loss;
}

}  // namespace stagelab
