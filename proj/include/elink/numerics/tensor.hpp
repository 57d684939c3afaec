#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace elink {

using Shape = std::vector<std::size_t>;

/// Raised when operand shapes are incompatible; the message names both shapes.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

[[noreturn]] inline void throw_dimension_error(const std::string& op, const Shape& a, const Shape& b) {
  throw DimensionError(op + ": incompatible shapes " + shape_string(a) + " and " + shape_string(b));
}

/// Dense row-major tensor of reals.
template <class Real>
class Tensor {
 public:
  using value_type = Real;

  Tensor() = default;

  explicit Tensor(Shape shape, Real fill = Real{0})
      : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

  Tensor(Shape shape, std::vector<Real> values) : shape_(std::move(shape)), data_(std::move(values)) {
    if (data_.size() != shape_size(shape_)) {
      throw DimensionError("Tensor: " + std::to_string(data_.size()) + " values for shape " +
                           shape_string(shape_));
    }
  }

  static Tensor vector(std::initializer_list<Real> values) {
    return Tensor({values.size()}, std::vector<Real>(values));
  }
  static Tensor vector(std::vector<Real> values) {
    const std::size_t n = values.size();
    return Tensor({n}, std::move(values));
  }
  static Tensor scalar(Real value) { return Tensor({}, std::vector<Real>{value}); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  /// Width of the trailing axis (1 for scalars).
  std::size_t last_dim() const noexcept { return shape_.empty() ? 1 : shape_.back(); }
  /// Number of trailing-axis rows.
  std::size_t outer_size() const noexcept {
    const std::size_t w = last_dim();
    return w == 0 ? 0 : data_.size() / w;
  }

  std::span<Real> data() noexcept { return data_; }
  std::span<const Real> data() const noexcept { return data_; }
  const std::vector<Real>& values() const noexcept { return data_; }

  Real& operator[](std::size_t i) noexcept { return data_[i]; }
  const Real& operator[](std::size_t i) const noexcept { return data_[i]; }

  Real& at(std::size_t row, std::size_t col) { return data_[row * last_dim() + col]; }
  const Real& at(std::size_t row, std::size_t col) const { return data_[row * last_dim() + col]; }

  std::span<Real> row(std::size_t r) { return std::span<Real>(data_).subspan(r * last_dim(), last_dim()); }
  std::span<const Real> row(std::size_t r) const {
    return std::span<const Real>(data_).subspan(r * last_dim(), last_dim());
  }

  Real item() const {
    if (data_.size() != 1) throw DimensionError("item: tensor of shape " + shape_string(shape_) + " is not a scalar");
    return data_[0];
  }

  Tensor reshaped(Shape shape) const {
    if (shape_size(shape) != data_.size()) throw_dimension_error("reshape", shape_, shape);
    return Tensor(std::move(shape), data_);
  }

  void fill(Real v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](Real v) { return std::isfinite(v); });
  }

  template <class Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(shape_, std::vector<Other>(data_.begin(), data_.end()));
  }

  friend bool operator==(const Tensor& a, const Tensor& b) { return a.shape_ == b.shape_ && a.data_ == b.data_; }

 private:
  Shape shape_;
  std::vector<Real> data_;
};

template <class Real>
Real max_abs_diff(const Tensor<Real>& a, const Tensor<Real>& b) {
  if (a.shape() != b.shape()) throw_dimension_error("max_abs_diff", a.shape(), b.shape());
  Real m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace elink
