// SPDX-License-Identifier: Apache-2.0
/**
 * @file   gradcheck.hpp
 * @brief  Central finite-difference check of reverse-mode gradients.
 */
#pragma once

#include <copygen/core/graph.hpp>

#include <cstdint>
#include <functional>
#include <optional>
#include <random>

namespace copygen {

/// Raised when the checked function gives different results for identical inputs.
class DeterminismError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Builds a scalar loss from named parameters inside the given graph.
using GraphLoss = std::function<Expr(Graph&, const NamedTensors&)>;

struct GradcheckOptions {
  double epsilon = 1e-5;
  /// Coordinates checked per parameter tensor; nullopt checks every coordinate.
  std::optional<std::size_t> probes_per_tensor;
  std::uint64_t seed = 0;
  /// Op kind whose backward rule is deliberately scaled (sensitivity testing only).
  std::optional<std::pair<std::string, double>> fault;
};

struct GradcheckResult {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t probes = 0;
  std::map<std::string, double> per_parameter;
};

/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8)
inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-8});
}

/**
 * Compares the backward-pass gradient of `loss` with central differences
 * (f(p + eps) - f(p - eps)) / 2 eps for every trainable tensor in `params`.
 * `params` is perturbed in place and restored before returning.
 */
inline GradcheckResult finite_difference_check(const GraphLoss& loss, NamedTensors& params,
                                               const GradcheckOptions& opts = {}) {
  if (!(opts.epsilon > 1e-8 && opts.epsilon < 1e-3))
    throw std::invalid_argument("finite_difference_check: epsilon must lie in (1e-8, 1e-3)");

  auto evaluate = [&] {
    Graph g(false);
    return loss(g, params).value().item();
  };

  GradientMap analytic;
  {
    Graph g(true);
    if (opts.fault) g.inject_backward_fault(opts.fault->first, opts.fault->second);
    Expr root = loss(g, params);
    g.backward(root, analytic);
  }
  const double f0 = evaluate();
  if (const double f1 = evaluate(); f0 != f1)
    throw DeterminismError("finite_difference_check: loss differs across identical evaluations (" +
                           std::to_string(f0) + " vs " + std::to_string(f1) + ")");

  GradcheckResult result;
  std::mt19937_64 rng(opts.seed);
  for (auto& [name, tensor] : params) {
    if (!tensor.requires_grad()) continue;
    std::vector<std::size_t> coords(tensor.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (opts.probes_per_tensor && *opts.probes_per_tensor < coords.size()) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(*opts.probes_per_tensor);
      std::sort(coords.begin(), coords.end());
    }
    const auto git = analytic.find(name);
    double worst = 0.0;
    for (auto c : coords) {
      const double a = git == analytic.end() ? 0.0 : git->second[c];
      const double orig = tensor[c];
      const double hi = orig + opts.epsilon, lo = orig - opts.epsilon;
      tensor[c] = hi;
      const double up = evaluate();
      tensor[c] = lo;
      const double down = evaluate();
      tensor[c] = orig;
      const double numeric = (up - down) / (hi - lo);
      const double err = relative_error(a, numeric);
      ++result.probes;
      worst = std::max(worst, err);
      if (result.probes == 1 || err > result.max_relative_error) {
        result.max_relative_error = err;
        result.worst_parameter = name;
        result.worst_index = c;
        result.worst_analytic = a;
        result.worst_numeric = numeric;
      }
    }
    result.per_parameter[name] = worst;
  }
  return result;
}

}  // namespace copygen
