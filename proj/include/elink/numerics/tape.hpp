#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <stdexcept>
#include <unordered_map>
#include <utility>
#include <vector>

#include "elink/numerics/params.hpp"
#include "elink/numerics/tensor.hpp"

namespace elink {

template <class Real>
class Tape;

/// Handle to a value recorded on a Tape.
template <class Real>
class Var {
 public:
  Var() = default;
  Var(Tape<Real>* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor<Real>& value() const { return tape_->value(id_); }
  const Shape& shape() const { return value().shape(); }
  std::size_t size() const { return value().size(); }
  Real item() const { return value().item(); }

  Tape<Real>& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  Tape<Real>* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode recording of tensor operations.
///
/// Nodes are appended in evaluation order, so reverse index order is a valid
/// topological order for backpropagation. Parameter leaves alias the
/// ParamStore tensors; the store must outlive the tape and stay unmodified
/// while it is in use. A non-recording tape only evaluates values.
template <class Real>
class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t)>;

  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const noexcept { return recording_; }

  Var<Real> constant(Tensor<Real> value) {
    nodes_.push_back(Node{std::move(value), nullptr, {}, {}, false});
    return Var<Real>(this, nodes_.size() - 1);
  }

  Var<Real> param(const ParamStore<Real>& store, ParamId p) {
    if (store_ != nullptr && store_ != &store) {
      throw std::logic_error("Tape: parameters from two different stores");
    }
    store_ = &store;
    if (auto it = param_leaves_.find(p.index); it != param_leaves_.end()) return Var<Real>(this, it->second);
    nodes_.push_back(Node{{}, &store.value(p), {}, {}, recording_});
    param_leaves_.emplace(p.index, nodes_.size() - 1);
    return Var<Real>(this, nodes_.size() - 1);
  }

  /// Records an op result. `backward` runs only when some parent needs a gradient.
  Var<Real> push(Tensor<Real> value, std::initializer_list<std::size_t> parents, Backward backward) {
    bool needs = false;
    if (recording_) {
      for (std::size_t p : parents) needs = needs || nodes_[p].needs_grad;
    }
    nodes_.push_back(Node{std::move(value), nullptr, {}, needs ? std::move(backward) : Backward{}, needs});
    return Var<Real>(this, nodes_.size() - 1);
  }
  Var<Real> push(Tensor<Real> value, const std::vector<std::size_t>& parents, Backward backward) {
    bool needs = false;
    if (recording_) {
      for (std::size_t p : parents) needs = needs || nodes_[p].needs_grad;
    }
    nodes_.push_back(Node{std::move(value), nullptr, {}, needs ? std::move(backward) : Backward{}, needs});
    return Var<Real>(this, nodes_.size() - 1);
  }

  const Tensor<Real>& value(std::size_t id) const {
    const Node& n = nodes_[id];
    return n.external ? *n.external : n.value;
  }

  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }

  /// Gradient buffer of a node, allocated as zeros on first access.
  Tensor<Real>& grad(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.size() != value(id).size() || n.grad.shape() != value(id).shape()) n.grad = Tensor<Real>(value(id).shape());
    return n.grad;
  }
  bool has_grad(std::size_t id) const { return !nodes_[id].grad.empty() || value(id).empty(); }

  /// Backpropagates from a scalar loss. Gradients from a previous call are discarded.
  void backward(Var<Real> loss) {
    if (loss.value().size() != 1) {
      throw std::invalid_argument("backward: loss must be a scalar, got shape " + shape_string(loss.shape()));
    }
    if (!recording_) throw std::logic_error("backward: tape was not recording");
    for (Node& n : nodes_) n.grad = Tensor<Real>();
    grad(loss.id())[0] = Real{1};
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.backward && !n.grad.empty()) n.backward(*this, i);
    }
  }

  /// Gradient of the last backward() with respect to a parameter (zeros if unreachable).
  Tensor<Real> param_grad(ParamId p) const {
    auto it = param_leaves_.find(p.index);
    if (store_ == nullptr) throw std::logic_error("param_grad: tape holds no parameters");
    const Shape& shape = store_->value(p).shape();
    if (it == param_leaves_.end() || nodes_[it->second].grad.empty()) return Tensor<Real>(shape);
    return nodes_[it->second].grad;
  }

  /// Adds parameter gradients of the last backward() into the store's grad buffers.
  void accumulate_into(ParamStore<Real>& store) const {
    if (store_ != nullptr && store_ != &store) throw std::logic_error("accumulate_into: foreign store");
    for (const auto& [index, node] : param_leaves_) {
      const Tensor<Real>& g = nodes_[node].grad;
      if (g.empty()) continue;
      auto dst = store.grad(ParamId{index}).data();
      auto src = g.data();
      for (std::size_t k = 0; k < src.size(); ++k) dst[k] += src[k];
    }
  }

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor<Real> value;
    const Tensor<Real>* external;
    Tensor<Real> grad;
    Backward backward;
    bool needs_grad;
  };

  bool recording_;
  std::vector<Node> nodes_;
  std::unordered_map<std::size_t, std::size_t> param_leaves_;
  const ParamStore<Real>* store_ = nullptr;
};

}  // namespace elink
