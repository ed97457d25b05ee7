// Copyright (c) 2026 Stagelab contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>

#include "stagelab/param.hpp"

namespace stagelab {

/// Adam with bias correction. Moments exist only for the trainable set the
/// state was reset against; training resets the state whenever the
/// trainable selection changes (phase boundaries).
template <typename R>
class AdamState {
 public:
  R learning_rate = R(1e-3);
  R beta1 = R(0.9);
  R beta2 = R(0.999);
  R epsilon = R(1e-7);

  AdamState() = default;
  AdamState(R lr, R b1, R b2, R eps) : learning_rate(lr), beta1(b1), beta2(b2), epsilon(eps) {}

  std::int64_t step_count() const { return t_; }

  /// Fresh zero moments for the currently trainable parameters.
  void reset(const ParameterStore<R>& store) {
    t_ = 0;
    m_.clear();
    v_.clear();
    for (std::size_t i = 0; i < store.size(); ++i) {
      const auto& p = store.at(i);
      if (!p.trainable) continue;
      m_.emplace(p.name, Tensor<R>(p.value.shape));
      v_.emplace(p.name, Tensor<R>(p.value.shape));
    }
  }

  /// One update over all trainable parameters. Frozen parameters are not
  /// touched at all, so their bytes stay identical.
  void step(ParameterStore<R>& store) {
    ++t_;
    const R bc1 = R(1) - std::pow(beta1, static_cast<R>(t_));
    const R bc2 = R(1) - std::pow(beta2, static_cast<R>(t_));
    for (std::size_t i = 0; i < store.size(); ++i) {
      auto& p = store.at(i);
      if (!p.trainable) continue;
      if (!p.gradient)
        raise(concat("adam step: trainable parameter '", p.name, "' has no gradient"));
      auto mit = m_.find(p.name);
      if (mit == m_.end())
        raise(concat("adam step: no moment state for '", p.name,
                     "'; reset the optimizer after changing the trainable set"));
      Tensor<R>& m = mit->second;
      Tensor<R>& v = v_.find(p.name)->second;
      const Tensor<R>& g = *p.gradient;
      for (std::size_t j = 0; j < g.size(); ++j) {
        m[j] = beta1 * m[j] + (R(1) - beta1) * g[j];
        v[j] = beta2 * v[j] + (R(1) - beta2) * g[j] * g[j];
        const R mhat = m[j] / bc1;
        const R vhat = v[j] / bc2;
        p.value[j] -= learning_rate * mhat / (std::sqrt(vhat) + epsilon);
      }
    }
  }

 private:
  std::int64_t t_ = 0;
  std::unordered_map<std::string, Tensor<R>> m_;
  std::unordered_map<std::string, Tensor<R>> v_;
};

}  // namespace stagelab
