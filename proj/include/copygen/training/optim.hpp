// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <copygen/core/graph.hpp>

#include <json.hpp>

#include <cmath>
#include <cstdint>

namespace copygen {

enum class OptimizerKind { adam, adagrad };

inline std::string to_string(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "adagrad"; }

inline OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "adam") return OptimizerKind::adam;
  if (s == "adagrad") return OptimizerKind::adagrad;
  throw std::invalid_argument("unknown optimizer '" + s + "' (expected adam or adagrad)");
}

inline void to_json(nlohmann::json& j, OptimizerKind k) { j = to_string(k); }
inline void from_json(const nlohmann::json& j, OptimizerKind& k) { k = parse_optimizer(j.get<std::string>()); }

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

inline constexpr double kAdagradEpsilon = 1e-10;

/// Per-parameter moment buffers, keyed "<slot>/<parameter>".
struct OptimizerState {
  std::uint64_t step = 0;
  NamedTensors slots;

  Tensor& slot(const std::string& kind, const std::string& name, const Shape& shape) {
    auto [it, inserted] = slots.try_emplace(kind + "/" + name, shape);
    if (!inserted && it->second.shape() != shape)
      throw DimensionError("optimizer slot '" + it->first + "' has shape " + shape_string(it->second.shape()));
    return it->second;
  }

  friend bool operator==(const OptimizerState&, const OptimizerState&) = default;
};

inline double global_norm(const GradientMap& grads) {
  double s = 0.0;
  for (const auto& [_, g] : grads)
    for (double v : g.values()) s += v * v;
  return std::sqrt(s);
}

/// Rescales all gradients by max_norm / norm when the global L2 norm exceeds max_norm. Returns the pre-clip norm.
inline double clip_gradients(GradientMap& grads, double max_norm) {
  if (!(max_norm > 0.0)) throw std::invalid_argument("clip_gradients: max_norm must be positive");
  const double norm = global_norm(grads);
  if (norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& [_, g] : grads)
      for (double& v : g.values()) v *= s;
  }
  return norm;
}

namespace detail {

// Trainable parameters receive an update; a missing gradient counts as zero.
template <class F>
void for_each_trainable(NamedTensors& params, const GradientMap& grads, F&& f) {
  for (auto& [name, p] : params) {
    if (!p.requires_grad()) continue;
    auto it = grads.find(name);
    if (it != grads.end() && it->second.shape() != p.shape())
      throw DimensionError("gradient for '" + name + "' has shape " + shape_string(it->second.shape()) +
                           ", parameter has " + shape_string(p.shape()));
    f(name, p, it == grads.end() ? nullptr : it->second.data());
  }
}

}  // namespace detail

inline void adam_step(NamedTensors& params, const GradientMap& grads, OptimizerState& state, double lr,
                      const AdamHyper& h = {}) {
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(h.beta1, t);
  const double c2 = 1.0 - std::pow(h.beta2, t);
  detail::for_each_trainable(params, grads, [&](const std::string& name, Tensor& p, const double* g) {
    double* m = state.slot("adam.m", name, p.shape()).data();
    double* v = state.slot("adam.v", name, p.shape()).data();
    double* x = p.data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g ? g[i] : 0.0;
      m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * gi;
      v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * gi * gi;
      x[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + h.epsilon);
    }
  });
}

inline void adagrad_step(NamedTensors& params, const GradientMap& grads, OptimizerState& state, double lr,
                         double epsilon = kAdagradEpsilon) {
  ++state.step;
  detail::for_each_trainable(params, grads, [&](const std::string& name, Tensor& p, const double* g) {
    double* acc = state.slot("adagrad.acc", name, p.shape()).data();
    double* x = p.data();
    if (!g) return;
    for (std::size_t i = 0; i < p.size(); ++i) {
      acc[i] += g[i] * g[i];
      x[i] -= lr * g[i] / (std::sqrt(acc[i]) + epsilon);
    }
  });
}

inline void optimizer_step(OptimizerKind kind, NamedTensors& params, const GradientMap& grads, OptimizerState& state,
                           double lr) {
  if (kind == OptimizerKind::adam)
    adam_step(params, grads, state, lr);
  else
    adagrad_step(params, grads, state, lr);
}

}  // namespace copygen
