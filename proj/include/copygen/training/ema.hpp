// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <copygen/core/graph.hpp>

namespace copygen {

/// Raised when shadow and parameter sets disagree in names or shapes.
class StructuralError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Exponential moving average of the trainable parameters.
struct EmaShadow {
  double beta = 0.9999;
  NamedTensors shadow;

  /// Shadow starts as a copy of the trainable parameters; frozen ones are left out.
  static EmaShadow from(const NamedTensors& params, double beta) {
    if (!(beta >= 0.0 && beta <= 1.0)) throw std::invalid_argument("ema: decay must lie in [0, 1]");
    EmaShadow s;
    s.beta = beta;
    for (const auto& [name, p] : params) {
      if (!p.requires_grad()) continue;
      Tensor copy(p.shape(), std::vector<double>(p.values().begin(), p.values().end()));
      s.shadow.emplace(name, std::move(copy));
    }
    return s;
  }

  friend bool operator==(const EmaShadow&, const EmaShadow&) = default;
};

/// shadow <- beta * shadow + (1 - beta) * theta, elementwise over every trainable parameter.
inline void ema_update(EmaShadow& s, const NamedTensors& params) {
  std::size_t trainable = 0;
  for (const auto& [name, p] : params) {
    if (!p.requires_grad()) continue;
    ++trainable;
    auto it = s.shadow.find(name);
    if (it == s.shadow.end()) throw StructuralError("ema: no shadow for parameter '" + name + "'");
    if (it->second.shape() != p.shape())
      throw StructuralError("ema: shadow '" + name + "' has shape " + shape_string(it->second.shape()) +
                            ", parameter has " + shape_string(p.shape()));
  }
  if (trainable != s.shadow.size())
    throw StructuralError("ema: shadow holds " + std::to_string(s.shadow.size()) + " tensors for " +
                          std::to_string(trainable) + " trainable parameters");
  const double b = s.beta, a = 1.0 - s.beta;
  for (auto& [name, sh] : s.shadow) {
    const double* x = params.at(name).data();
    double* y = sh.data();
    for (std::size_t i = 0; i < sh.size(); ++i) y[i] = b * y[i] + a * x[i];
  }
}

/// The full parameter set with trainable tensors replaced by their averages.
inline NamedTensors apply_shadow(const NamedTensors& params, const EmaShadow& s) {
  NamedTensors out = params;
  for (const auto& [name, sh] : s.shadow) {
    auto it = out.find(name);
    if (it == out.end()) throw StructuralError("ema: shadow '" + name + "' has no parameter");
    const bool rg = it->second.requires_grad();
    it->second = sh;
    it->second.set_requires_grad(rg);
  }
  return out;
}

}  // namespace copygen
