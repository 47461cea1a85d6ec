#pragma once

#include <cstddef>
#include <initializer_list>
#include <memory>
#include <type_traits>
#include <span>
#include <utility>
#include <vector>

namespace pepsgen {

using Shape = std::vector<std::size_t>;

namespace detail {
/// Allocator whose value-initialization is a no-op for trivial types, so
/// buffers that are about to be overwritten are not zero-filled first.
template <class T>
struct DefaultInitAllocator : std::allocator<T> {
  template <class U>
  struct rebind {
    using other = DefaultInitAllocator<U>;
  };
  using std::allocator<T>::allocator;
  template <class U>
  void construct(U* p) noexcept(std::is_nothrow_default_constructible_v<U>) {
    ::new (static_cast<void*>(p)) U;
  }
  template <class U, class... Args>
  void construct(U* p, Args&&... args) {
    ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
  }
};
}  // namespace detail
using AxisPair = std::pair<std::size_t, std::size_t>;

std::size_t shape_size(const Shape& shape);

/// Dense real tensor in row-major order. A rank-0 tensor holds one scalar.
class Tensor {
 public:
  Tensor() : data_(1, 0.0) {}
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double value);
  /// Entries are left unset; the caller writes every one.
  static Tensor uninitialized(Shape shape);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }
  const double* raw() const noexcept { return data_.data(); }
  double* raw() noexcept { return data_.data(); }

  double& operator[](std::size_t flat) { return data_[flat]; }
  double operator[](std::size_t flat) const { return data_[flat]; }

  double& at(std::span<const std::size_t> index);
  double at(std::span<const std::size_t> index) const;
  double& at(std::initializer_list<std::size_t> index) {
    return at(std::span<const std::size_t>(index.begin(), index.size()));
  }
  double at(std::initializer_list<std::size_t> index) const {
    return at(std::span<const std::size_t>(index.begin(), index.size()));
  }

  std::size_t flat_index(std::span<const std::size_t> index) const;

  /// Same data, new shape with the same number of entries.
  Tensor reshaped(Shape shape) const&;
  Tensor reshaped(Shape shape) &&;

  double max_abs() const noexcept;
  double frobenius_norm() const noexcept;
  bool all_finite() const noexcept;

  Tensor& operator*=(double alpha) noexcept;
  Tensor& operator+=(const Tensor& other);
  Tensor& operator-=(const Tensor& other);

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double, detail::DefaultInitAllocator<double>> data_;
};

Tensor operator*(double alpha, Tensor t);
Tensor operator+(Tensor a, const Tensor& b);
Tensor operator-(Tensor a, const Tensor& b);

/// Sum over paired axes. Result axes are the free axes of `a` followed by the
/// free axes of `b`, each in their original order.
Tensor contract(const Tensor& a, const Tensor& b,
                std::span<const AxisPair> pairs);
inline Tensor contract(const Tensor& a, const Tensor& b,
                       std::initializer_list<AxisPair> pairs) {
  return contract(a, b, std::span<const AxisPair>(pairs.begin(), pairs.size()));
}

/// Result axis i is input axis order[i].
Tensor permute(const Tensor& a, std::span<const std::size_t> order);
inline Tensor permute(const Tensor& a, std::initializer_list<std::size_t> order) {
  return permute(a, std::span<const std::size_t>(order.begin(), order.size()));
}

/// Full contraction of two tensors of identical shape.
double inner(const Tensor& a, const Tensor& b);

struct SvdTruncation {
  std::size_t max_rank = 0;  // 0: no rank cap
  double rel_tol = 0.0;      // drop singular values below rel_tol * s_max
};

struct SvdResult {
  Tensor u;  // row axes..., k
  std::vector<double> s;
  Tensor v;  // k, column axes...
  double kept_weight = 1.0;
  double discarded_weight = 0.0;  // sum of discarded s^2
};

/// Truncated SVD of `a` viewed as a matrix whose rows are `row_axes` (in the
/// given order) and whose columns are the remaining axes in ascending order.
SvdResult svd_truncate(const Tensor& a, std::span<const std::size_t> row_axes,
                       const SvdTruncation& settings);
inline SvdResult svd_truncate(const Tensor& a,
                              std::initializer_list<std::size_t> row_axes,
                              const SvdTruncation& settings) {
  return svd_truncate(
      a, std::span<const std::size_t>(row_axes.begin(), row_axes.size()),
      settings);
}

/// Thin QR of `a` viewed as a (prod of leading `n_row_axes` dims) x (rest)
/// matrix. Returns Q (row dims..., k) and R (k, column dims...).
std::pair<Tensor, Tensor> qr_split(const Tensor& a, std::size_t n_row_axes);

}  // namespace pepsgen
