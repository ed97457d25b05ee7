// Copyright (c) 2026 Stagelab contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "stagelab/rng.hpp"
#include "stagelab/tensor.hpp"

namespace stagelab {

enum class ParamKind {
  conv_weight,
  conv_bias,
  bn_scale,
  bn_shift,
  bn_moving_mean,
  bn_moving_var,
  dense_weight,
  dense_bias,
};

inline const char* param_kind_name(ParamKind k) {
  switch (k) {
    case ParamKind::conv_weight: return "conv_weight";
    case ParamKind::conv_bias: return "conv_bias";
    case ParamKind::bn_scale: return "bn_scale";
    case ParamKind::bn_shift: return "bn_shift";
    case ParamKind::bn_moving_mean: return "bn_moving_mean";
    case ParamKind::bn_moving_var: return "bn_moving_var";
    case ParamKind::dense_weight: return "dense_weight";
    case ParamKind::dense_bias: return "dense_bias";
  }
  return "?";
}

inline bool is_batchnorm_kind(ParamKind k) {
  return k == ParamKind::bn_scale || k == ParamKind::bn_shift ||
         k == ParamKind::bn_moving_mean || k == ParamKind::bn_moving_var;
}

/// Parameter metadata; lets planning and counting work without allocating
/// any weight storage.
struct ParamSpec {
  std::string name;  // hierarchical, e.g. stage2.block0.conv1.weight
  ParamKind kind;
  Shape shape;

  std::size_t count() const { return numel(shape); }
};

template <typename R>
struct Parameter {
  std::string name;
  ParamKind kind;
  Tensor<R> value;
  std::optional<Tensor<R>> gradient;  // present only after a backward pass on a trainable param
  bool trainable = false;
};

/// Owns every weight of one network, in network order. Batch-norm entries
/// can never be marked trainable; their statistics are part of the frozen
/// state and are only ever written by initialization or transfusion.
template <typename R>
class ParameterStore {
 public:
  ParameterStore() = default;

  explicit ParameterStore(const std::vector<ParamSpec>& specs) {
    params_.reserve(specs.size());
    for (const auto& s : specs) {
      if (index_.count(s.name)) raise(concat("duplicate parameter name '", s.name, "'"));
      index_[s.name] = params_.size();
      params_.push_back(Parameter<R>{s.name, s.kind, Tensor<R>(s.shape), std::nullopt, false});
    }
  }

  std::size_t size() const { return params_.size(); }
  Parameter<R>& at(std::size_t i) { return params_[i]; }
  const Parameter<R>& at(std::size_t i) const { return params_[i]; }

  Parameter<R>* find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &params_[it->second];
  }
  const Parameter<R>* find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &params_[it->second];
  }

  Parameter<R>& get(const std::string& name) {
    if (auto* p = find(name)) return *p;
    raise(concat("unknown parameter '", name, "'"));
  }
  const Parameter<R>& get(const std::string& name) const {
    if (auto* p = find(name)) return *p;
    raise(concat("unknown parameter '", name, "'"));
  }

  std::size_t index_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) raise(concat("unknown parameter '", name, "'"));
    return it->second;
  }

  /// He-uniform for conv/dense weights, zeros for biases/shift/moving mean,
  /// ones for scale/moving variance.
  void init_default(std::uint64_t seed) {
    Rng rng(seed);
    for (auto& p : params_) {
      switch (p.kind) {
        case ParamKind::conv_weight: {
          // (Co, Ci, kh, kw): fan-in = Ci*kh*kw
          double fan_in = static_cast<double>(p.value.shape[1] * p.value.shape[2] * p.value.shape[3]);
          double bound = std::sqrt(6.0 / fan_in);
          for (auto& v : p.value.data) v = static_cast<R>(rng.uniform(-bound, bound));
          break;
        }
        case ParamKind::dense_weight: {
          // (K, D): fan-in = D
          double fan_in = static_cast<double>(p.value.shape[1]);
          double bound = std::sqrt(6.0 / fan_in);
          for (auto& v : p.value.data) v = static_cast<R>(rng.uniform(-bound, bound));
          break;
        }
        case ParamKind::bn_scale:
        case ParamKind::bn_moving_var:
          p.value.fill(R(1));
          break;
        default:
          p.value.zero();
          break;
      }
    }
  }

  /// Marks exactly `names` trainable and everything else frozen. Rejects
  /// batch-norm names; drops stale gradients of params leaving the set.
  void set_trainable(const std::set<std::string>& names) {
    for (const auto& n : names) {
      const auto& p = get(n);
      if (is_batchnorm_kind(p.kind))
        raise(concat("batch-norm parameter '", n, "' can not be made trainable"));
    }
    for (auto& p : params_) {
      bool t = names.count(p.name) > 0;
      p.trainable = t;
      if (!t) p.gradient.reset();
    }
  }

  void clear_gradients() {
    for (auto& p : params_) p.gradient.reset();
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(params_.size());
    for (const auto& p : params_) out.push_back(p.name);
    return out;
  }

  std::set<std::string> trainable_names() const {
    std::set<std::string> out;
    for (const auto& p : params_)
      if (p.trainable) out.insert(p.name);
    return out;
  }

  std::size_t total_scalars() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

 private:
  std::vector<Parameter<R>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace stagelab
