#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "elink/numerics/rng.hpp"
#include "elink/numerics/tensor.hpp"

namespace elink {

struct ParamId {
  std::size_t index = static_cast<std::size_t>(-1);
  bool valid() const noexcept { return index != static_cast<std::size_t>(-1); }
  friend bool operator==(ParamId, ParamId) = default;
};

/// Named learnable tensors with their gradients and Adam moments.
template <class Real>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor<Real> value;
    Tensor<Real> grad;
    Tensor<Real> first_moment;
    Tensor<Real> second_moment;
  };

  ParamId add(const std::string& name, Tensor<Real> init) {
    if (by_name_.contains(name)) throw std::invalid_argument("ParamStore: duplicate parameter '" + name + "'");
    const Shape shape = init.shape();
    entries_.push_back({name, std::move(init), Tensor<Real>(shape), Tensor<Real>(shape), Tensor<Real>(shape)});
    const ParamId id{entries_.size() - 1};
    by_name_.emplace(name, id.index);
    return id;
  }

  ParamId id(const std::string& name) const {
    auto it = by_name_.find(name);
    if (it == by_name_.end()) throw std::out_of_range("ParamStore: no parameter '" + name + "'");
    return ParamId{it->second};
  }
  bool contains(const std::string& name) const { return by_name_.contains(name); }

  Tensor<Real>& value(ParamId p) { return entries_.at(p.index).value; }
  const Tensor<Real>& value(ParamId p) const { return entries_.at(p.index).value; }
  Tensor<Real>& grad(ParamId p) { return entries_.at(p.index).grad; }
  const Tensor<Real>& grad(ParamId p) const { return entries_.at(p.index).grad; }
  const std::string& name(ParamId p) const { return entries_.at(p.index).name; }

  std::size_t size() const noexcept { return entries_.size(); }
  std::vector<Entry>& entries() noexcept { return entries_; }
  const std::vector<Entry>& entries() const noexcept { return entries_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.value.size();
    return n;
  }

  void zero_grad() {
    for (auto& e : entries_) e.grad.fill(Real{0});
  }

  /// Global L2 norm of all gradients.
  Real grad_norm() const {
    long double s = 0;
    for (const auto& e : entries_)
      for (Real g : e.grad.data()) s += static_cast<long double>(g) * g;
    return static_cast<Real>(std::sqrt(s));
  }

  /// Scales gradients so their global norm is at most max_norm. Returns the pre-clip norm.
  Real clip_grad_norm(Real max_norm) {
    const Real norm = grad_norm();
    if (max_norm > 0 && norm > max_norm) {
      const Real f = max_norm / norm;
      for (auto& e : entries_)
        for (Real& g : e.grad.data()) g *= f;
    }
    return norm;
  }

  std::size_t adam_steps = 0;

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> by_name_;
};

/// Xavier normal: N(0, 2 / (fan_in + fan_out)).
template <class Real>
Tensor<Real> xavier_normal(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  Tensor<Real> t(std::move(shape));
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in + fan_out));
  for (Real& v : t.data()) v = static_cast<Real>(rng.normal(0.0, stddev));
  return t;
}

/// Xavier normal for a weight matrix of shape (out, in).
template <class Real>
Tensor<Real> xavier_matrix(std::size_t out, std::size_t in, Rng& rng) {
  return xavier_normal<Real>({out, in}, in, out, rng);
}

}  // namespace elink
