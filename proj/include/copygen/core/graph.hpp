// SPDX-License-Identifier: Apache-2.0
/**
 * @file   graph.hpp
 * @brief  Define-by-run computation graph for reverse-mode differentiation.
 *
 * Every op evaluates eagerly and, when the graph is recording, appends a node
 * holding its output and a backward rule. Nodes are only ever appended, so the
 * node order is a topological order and backward is a single reverse sweep.
 *
 * Named parameter leaves route their gradients into a GradientMap keyed by the
 * parameter name, which keeps parameter storage itself read-only during a pass.
 */
#pragma once

#include <copygen/core/tensor.hpp>

#include <functional>
#include <map>
#include <string>
#include <unordered_map>
#include <utility>

namespace copygen {

/// Ordered name -> tensor map. Used both for parameter sets and for their gradients.
using NamedTensors = std::map<std::string, Tensor>;
using GradientMap = NamedTensors;

class Graph;

/// Handle to a node of a Graph.
struct Expr {
  Graph* graph = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t size() const { return value().size(); }
};

class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, const Tensor& out, std::span<const double> dy)>;

  /// A non-recording graph computes identical forward values but keeps no backward rules.
  explicit Graph(bool recording = true) : recording_(recording) {}

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool recording() const { return recording_; }
  std::size_t size() const { return nodes_.size(); }

  Expr constant(Tensor t) { return push("constant", std::move(t), {}, nullptr, false); }

  /// Named parameter leaf. Repeated calls with the same name return the same node.
  /// The tensor is referenced, not copied, and must outlive the graph.
  Expr variable(const std::string& name, const Tensor& t) {
    if (auto it = variables_.find(name); it != variables_.end()) return Expr{this, it->second};
    const bool tracked = recording_ && t.requires_grad();
    BackwardFn fn;
    if (tracked) {
      fn = [name](Graph& g, const Tensor& out, std::span<const double> dy) {
        auto dst = g.param_grad(name, out.shape());
        for (std::size_t i = 0; i < dy.size(); ++i) dst[i] += dy[i];
      };
    }
    nodes_.push_back(Node{"parameter", Tensor(), &t, {}, std::move(fn), tracked});
    Expr e{this, nodes_.size() - 1};
    variables_.emplace(name, e.id);
    return e;
  }

  /// Appends an op node. Used by the op implementations.
  Expr record(const char* kind, Tensor value, std::vector<std::size_t> inputs, BackwardFn fn) {
    bool tracked = false;
    if (recording_)
      for (auto in : inputs) tracked = tracked || nodes_[in].needs_grad;
    if (!tracked) fn = nullptr;
    return push(kind, std::move(value), std::move(inputs), std::move(fn), tracked);
  }

  /// Appends a tracked node without graph inputs whose rule writes into parameter gradients.
  Expr record_leaf(const char* kind, Tensor value, BackwardFn fn) {
    const bool tracked = recording_ && fn;
    return push(kind, std::move(value), {}, tracked ? std::move(fn) : nullptr, tracked);
  }

  const Tensor& value(std::size_t id) const {
    const Node& n = nodes_.at(id);
    return n.external ? *n.external : n.value;
  }
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }

  /// Gradient accumulator of a node; valid only inside backward.
  std::span<double> grad_buffer(std::size_t id) {
    auto& buf = grads_[id];
    if (buf.empty()) buf.assign(value(id).size(), 0.0);
    return buf;
  }

  /// Gradient accumulator of a named parameter; valid only inside backward.
  std::span<double> param_grad(const std::string& name, const Shape& shape) {
    auto it = target_->find(name);
    if (it == target_->end()) it = target_->emplace(name, Tensor(shape)).first;
    if (it->second.shape() != shape)
      throw DimensionError("gradient for '" + name + "' has shape " + shape_string(it->second.shape()) +
                           ", expected " + shape_string(shape));
    return it->second.values();
  }

  /// Gradients of every tracked parameter with respect to the scalar root.
  GradientMap backward(Expr root) {
    GradientMap out;
    backward(root, out);
    return out;
  }

  /// Accumulates d root / d parameter into `into` (entries are added, not replaced).
  void backward(Expr root, GradientMap& into) {
    if (root.graph != this) throw std::logic_error("backward: root belongs to another graph");
    const Tensor& r = value(root.id);
    if (r.rank() != 0) throw RankError("backward: root must be a scalar, got " + shape_string(r.shape()));
    if (consumed_) throw std::logic_error("backward: graph already consumed by a previous pass");
    consumed_ = true;
    grads_.assign(root.id + 1, {});
    grads_[root.id] = {1.0};
    target_ = &into;
    for (std::size_t i = root.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.needs_grad || grads_[i].empty() || !n.backward) continue;
      if (!faults_.empty()) {
        if (auto f = faults_.find(n.kind); f != faults_.end())
          for (auto& v : grads_[i]) v *= f->second;
      }
      n.backward(*this, value(i), grads_[i]);
      std::vector<double>().swap(grads_[i]);
    }
    target_ = nullptr;
    grads_.clear();
  }

  /// Scales the incoming gradient of every node of the given op kind during backward.
  /// Exists so the gradient checker can be shown to detect a broken backward rule.
  void inject_backward_fault(const std::string& kind, double scale) { faults_[kind] = scale; }

 private:
  struct Node {
    std::string kind;
    Tensor value;
    const Tensor* external = nullptr;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool needs_grad = false;
  };

  Expr push(const char* kind, Tensor value, std::vector<std::size_t> inputs, BackwardFn fn, bool tracked) {
    nodes_.push_back(Node{kind, std::move(value), nullptr, std::move(inputs), std::move(fn), tracked});
    return Expr{this, nodes_.size() - 1};
  }

  bool recording_;
  bool consumed_ = false;
  std::vector<Node> nodes_;
  std::unordered_map<std::string, std::size_t> variables_;
  std::vector<std::vector<double>> grads_;
  GradientMap* target_ = nullptr;
  std::map<std::string, double> faults_;
};

inline const Tensor& Expr::value() const { return graph->value(id); }

}  // namespace copygen
