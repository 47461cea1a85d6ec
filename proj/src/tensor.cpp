#include "pepsgen/tensor.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <sstream>

#include "pepsgen/error.hpp"

namespace pepsgen {

namespace {

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatMap = Eigen::Map<const RowMatrix>;
using MatMap = Eigen::Map<RowMatrix>;

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

void check_permutation(std::span<const std::size_t> order, std::size_t rank) {
  if (order.size() != rank) {
    throw Error(ErrorKind::kIndex, "permute: order length " +
                                       std::to_string(order.size()) +
                                       " != rank " + std::to_string(rank));
  }
  std::array<bool, 32> seen{};
  for (std::size_t axis : order) {
    if (axis >= rank || seen[axis]) {
      throw Error(ErrorKind::kIndex, "permute: order is not a permutation");
    }
    seen[axis] = true;
  }
}

}  // namespace

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kDimension: return "dimension error";
    case ErrorKind::kIndex: return "index error";
    case ErrorKind::kNumeric: return "numeric error";
    case ErrorKind::kCapacity: return "capacity error";
    case ErrorKind::kFormat: return "format error";
    case ErrorKind::kInput: return "input error";
    case ErrorKind::kDegenerate: return "degenerate distribution";
    case ErrorKind::kInfiniteNll: return "infinite NLL";
    case ErrorKind::kNoSupport: return "no support";
    case ErrorKind::kEmptyMode: return "empty mode";
  }
  return "error";
}

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(data.begin(), data.end()) {
  if (data_.size() != shape_size(shape_)) {
    throw Error(ErrorKind::kDimension,
                "tensor data length " + std::to_string(data_.size()) +
                    " does not match shape " + shape_string(shape_));
  }
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, {value}); }

Tensor Tensor::uninitialized(Shape shape) {
  Tensor t;
  t.data_.resize(shape_size(shape));
  t.shape_ = std::move(shape);
  return t;
}

std::size_t Tensor::flat_index(std::span<const std::size_t> index) const {
  if (index.size() != shape_.size()) {
    throw Error(ErrorKind::kIndex, "index rank mismatch");
  }
  std::size_t flat = 0;
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= shape_[i]) {
      throw Error(ErrorKind::kIndex, "index out of range on axis " +
                                         std::to_string(i));
    }
    flat = flat * shape_[i] + index[i];
  }
  return flat;
}

double& Tensor::at(std::span<const std::size_t> index) {
  return data_[flat_index(index)];
}

double Tensor::at(std::span<const std::size_t> index) const {
  return data_[flat_index(index)];
}

Tensor Tensor::reshaped(Shape shape) const& {
  Tensor copy = *this;
  return std::move(copy).reshaped(std::move(shape));
}

Tensor Tensor::reshaped(Shape shape) && {
  if (shape_size(shape) != data_.size()) {
    throw Error(ErrorKind::kDimension, "reshape " + shape_string(shape_) +
                                           " -> " + shape_string(shape));
  }
  shape_ = std::move(shape);
  return std::move(*this);
}

double Tensor::max_abs() const noexcept {
  double m = 0.0;
  for (double x : data_) m = std::max(m, std::abs(x));
  return m;
}

double Tensor::frobenius_norm() const noexcept {
  double s = 0.0;
  for (double x : data_) s += x * x;
  return std::sqrt(s);
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(),
                     [](double x) { return std::isfinite(x); });
}

Tensor& Tensor::operator*=(double alpha) noexcept {
  for (double& x : data_) x *= alpha;
  return *this;
}

Tensor& Tensor::operator+=(const Tensor& other) {
  if (other.shape_ != shape_) {
    throw Error(ErrorKind::kDimension, "add: shape " + shape_string(shape_) +
                                           " vs " + shape_string(other.shape_));
  }
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor& Tensor::operator-=(const Tensor& other) {
  if (other.shape_ != shape_) {
    throw Error(ErrorKind::kDimension, "sub: shape " + shape_string(shape_) +
                                           " vs " + shape_string(other.shape_));
  }
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Tensor operator*(double alpha, Tensor t) {
  t *= alpha;
  return t;
}

Tensor operator+(Tensor a, const Tensor& b) {
  a += b;
  return a;
}

Tensor operator-(Tensor a, const Tensor& b) {
  a -= b;
  return a;
}

namespace {

// Fixed-capacity index list; the hot paths below run many times per sample
// on tensors of small rank and must not touch the heap for bookkeeping.
constexpr std::size_t kMaxRank = 32;

struct AxisList {
  std::array<std::size_t, kMaxRank> v{};
  std::size_t n = 0;

  void push_back(std::size_t x) {
    if (n == kMaxRank) throw Error(ErrorKind::kIndex, "tensor rank above 32");
    v[n++] = x;
  }
  std::size_t& back() { return v[n - 1]; }
  bool empty() const { return n == 0; }
  std::size_t size() const { return n; }
  std::size_t operator[](std::size_t i) const { return v[i]; }
  std::size_t& operator[](std::size_t i) { return v[i]; }
  std::span<const std::size_t> span() const { return {v.data(), n}; }
};

void check_rank(std::size_t rank) {
  if (rank > kMaxRank) throw Error(ErrorKind::kIndex, "tensor rank above 32");
}

}  // namespace

Tensor permute(const Tensor& a, std::span<const std::size_t> order) {
  const std::size_t rank = a.rank();
  check_rank(rank);
  check_permutation(order, rank);
  bool identity = true;
  for (std::size_t i = 0; i < rank; ++i) identity &= (order[i] == i);
  if (identity) return a;

  const Shape& in_shape = a.shape();
  std::array<std::size_t, kMaxRank> in_strides;
  {
    std::size_t st = 1;
    for (std::size_t i = rank; i-- > 0;) {
      in_strides[i] = st;
      st *= in_shape[i];
    }
  }
  Shape out_shape(rank);
  for (std::size_t i = 0; i < rank; ++i) out_shape[i] = in_shape[order[i]];
  Tensor out = Tensor::uninitialized(std::move(out_shape));
  const std::size_t total = out.size();
  if (total == 0) return out;

  // Output axes that stay adjacent in the input move as one fused axis.
  AxisList dims, strides;
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t ax = order[i];
    if (in_shape[ax] == 1) continue;
    if (!dims.empty() && strides.back() == in_strides[ax] * in_shape[ax]) {
      dims.back() *= in_shape[ax];
      strides.back() = in_strides[ax];
    } else {
      dims.push_back(in_shape[ax]);
      strides.push_back(in_strides[ax]);
    }
  }
  const double* in = a.raw();
  double* dst = out.raw();
  if (dims.size() <= 1) {
    std::copy(in, in + total, dst);
    return out;
  }

  // Two innermost loops run directly; the odometer steps the outer axes.
  const std::size_t r = dims.size();
  const std::size_t n1 = dims[r - 1], s1 = strides[r - 1];
  const std::size_t n0 = dims[r - 2], s0 = strides[r - 2];
  const std::size_t block = n0 * n1;
  std::array<std::size_t, kMaxRank> counter{};
  std::size_t src = 0;
  for (std::size_t done = 0; done < total; done += block) {
    const double* base = in + src;
    if (s1 == 1) {
      for (std::size_t i = 0; i < n0; ++i, dst += n1)
        std::copy(base + i * s0, base + i * s0 + n1, dst);
    } else {
      for (std::size_t i = 0; i < n0; ++i) {
        const double* row = base + i * s0;
        for (std::size_t k = 0; k < n1; ++k) *dst++ = row[k * s1];
      }
    }
    for (std::size_t ax = r - 2; ax-- > 0;) {
      src += strides[ax];
      if (++counter[ax] < dims[ax]) break;
      src -= strides[ax] * dims[ax];
      counter[ax] = 0;
    }
  }
  return out;
}

Tensor contract(const Tensor& a, const Tensor& b,
                std::span<const AxisPair> pairs) {
  check_rank(a.rank());
  check_rank(b.rank());
  std::array<bool, kMaxRank> used_a{}, used_b{};
  for (const auto& [ia, ib] : pairs) {
    if (ia >= a.rank() || ib >= b.rank()) {
      throw Error(ErrorKind::kIndex, "contract: axis out of range");
    }
    if (used_a[ia] || used_b[ib]) {
      throw Error(ErrorKind::kIndex, "contract: repeated axis");
    }
    if (a.dim(ia) != b.dim(ib)) {
      throw Error(ErrorKind::kDimension,
                  "contract: axis " + std::to_string(ia) + " of " +
                      shape_string(a.shape()) + " vs axis " +
                      std::to_string(ib) + " of " + shape_string(b.shape()));
    }
    used_a[ia] = used_b[ib] = true;
  }

  AxisList free_a, free_b;
  Shape out_shape;
  out_shape.reserve(a.rank() + b.rank() - 2 * pairs.size());
  std::size_t m = 1, n = 1, k = 1;
  for (std::size_t i = 0; i < a.rank(); ++i) {
    if (!used_a[i]) {
      free_a.push_back(i);
      out_shape.push_back(a.dim(i));
      m *= a.dim(i);
    }
  }
  for (std::size_t i = 0; i < b.rank(); ++i) {
    if (!used_b[i]) {
      free_b.push_back(i);
      out_shape.push_back(b.dim(i));
      n *= b.dim(i);
    }
  }
  for (const auto& pr : pairs) k *= a.dim(pr.first);

  // Pairs may be taken in any common order. Try the order of `a`'s axes and
  // the order of `b`'s axes, and keep whichever needs fewer entries moved.
  // Operand layout: contracted axes trailing (plain) or leading (transposed),
  // each block in order; anything else is permuted into the plain layout.
  enum class Layout { kPlain, kTransposed, kPermute };
  auto layout_of = [](const AxisList& free, const AxisList& summed, bool summed_last) {
    auto seq = [&](const AxisList& first, const AxisList& second) {
      std::size_t i = 0;
      for (std::size_t j = 0; j < first.size(); ++j, ++i)
        if (first[j] != i) return false;
      for (std::size_t j = 0; j < second.size(); ++j, ++i)
        if (second[j] != i) return false;
      return true;
    };
    const bool tail = seq(free, summed);
    const bool head = seq(summed, free);
    if (summed_last) {
      if (tail) return Layout::kPlain;
      if (head) return Layout::kTransposed;
    } else {
      if (head) return Layout::kPlain;
      if (tail) return Layout::kTransposed;
    }
    return Layout::kPermute;
  };
  struct Plan {
    AxisList sa, sb;
    Layout la, lb;
    std::size_t cost;
  };
  auto plan_for = [&](bool by_b) {
    std::array<AxisPair, kMaxRank> sorted;
    const std::size_t np = pairs.size();
    std::copy(pairs.begin(), pairs.end(), sorted.begin());
    if (by_b) {
      std::sort(sorted.begin(), sorted.begin() + np,
                [](const AxisPair& x, const AxisPair& y) { return x.second < y.second; });
    } else {
      std::sort(sorted.begin(), sorted.begin() + np);
    }
    Plan p;
    for (std::size_t i = 0; i < np; ++i) {
      p.sa.push_back(sorted[i].first);
      p.sb.push_back(sorted[i].second);
    }
    p.la = layout_of(free_a, p.sa, true);
    p.lb = layout_of(free_b, p.sb, false);
    p.cost = (p.la == Layout::kPermute ? a.size() : 0) +
             (p.lb == Layout::kPermute ? b.size() : 0);
    return p;
  };
  Plan plan = plan_for(false);
  if (plan.cost > 0) {
    Plan alt = plan_for(true);
    if (alt.cost < plan.cost) plan = alt;
  }

  Tensor out = Tensor::uninitialized(std::move(out_shape));
  if (m == 0 || n == 0) return out;
  MatMap c(out.raw(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
  if (k == 0) {
    c.setZero();
    return out;
  }

  Tensor pa, pb;
  const double* da = a.raw();
  const double* db = b.raw();
  if (plan.la == Layout::kPermute) {
    AxisList order = free_a;
    for (std::size_t i = 0; i < plan.sa.size(); ++i) order.push_back(plan.sa[i]);
    pa = permute(a, order.span());
    da = pa.raw();
    plan.la = Layout::kPlain;
  }
  if (plan.lb == Layout::kPermute) {
    AxisList order = plan.sb;
    for (std::size_t i = 0; i < free_b.size(); ++i) order.push_back(free_b[i]);
    pb = permute(b, order.span());
    db = pb.raw();
    plan.lb = Layout::kPlain;
  }
  const auto em = static_cast<Eigen::Index>(m), en = static_cast<Eigen::Index>(n),
             ek = static_cast<Eigen::Index>(k);
  using ColMatMap =
      Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor>>;
  // A transposed row-major operand is the same buffer read column-major.
  if (plan.la == Layout::kPlain) {
    ConstMatMap am(da, em, ek);
    if (plan.lb == Layout::kPlain) {
      c.noalias() = am * ConstMatMap(db, ek, en);
    } else {
      c.noalias() = am * ColMatMap(db, ek, en);
    }
  } else {
    ColMatMap am(da, em, ek);
    if (plan.lb == Layout::kPlain) {
      c.noalias() = am * ConstMatMap(db, ek, en);
    } else {
      c.noalias() = am * ColMatMap(db, ek, en);
    }
  }
  return out;
}

double inner(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw Error(ErrorKind::kDimension, "inner: shape " +
                                           shape_string(a.shape()) + " vs " +
                                           shape_string(b.shape()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

SvdResult svd_truncate(const Tensor& a, std::span<const std::size_t> row_axes,
                       const SvdTruncation& settings) {
  const std::size_t rank = a.rank();
  std::vector<bool> is_row(rank, false);
  for (std::size_t ax : row_axes) {
    if (ax >= rank || is_row[ax]) {
      throw Error(ErrorKind::kIndex, "svd_truncate: bad row axis");
    }
    is_row[ax] = true;
  }
  std::vector<std::size_t> order(row_axes.begin(), row_axes.end());
  Shape row_shape, col_shape;
  std::size_t rows = 1, cols = 1;
  for (std::size_t ax : row_axes) {
    row_shape.push_back(a.dim(ax));
    rows *= a.dim(ax);
  }
  for (std::size_t ax = 0; ax < rank; ++ax) {
    if (!is_row[ax]) {
      order.push_back(ax);
      col_shape.push_back(a.dim(ax));
      cols *= a.dim(ax);
    }
  }
  if (row_shape.empty() || col_shape.empty()) {
    throw Error(ErrorKind::kIndex,
                "svd_truncate: split must leave both groups nonempty");
  }
  if (!a.all_finite()) {
    throw Error(ErrorKind::kNumeric, "svd_truncate: non-finite input " +
                                         shape_string(a.shape()));
  }

  const Tensor pa = permute(a, order);
  ConstMatMap mat(pa.raw(), static_cast<Eigen::Index>(rows),
                  static_cast<Eigen::Index>(cols));
  Eigen::BDCSVD<Eigen::MatrixXd> svd(Eigen::MatrixXd(mat),
                                     Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (svd.info() != Eigen::Success) {
    std::ostringstream os;
    os << "svd_truncate: SVD did not converge on " << rows << "x" << cols
       << " matrix with max |entry| " << a.max_abs();
    throw Error(ErrorKind::kNumeric, os.str());
  }
  const Eigen::VectorXd& sv = svd.singularValues();
  const std::size_t full = static_cast<std::size_t>(sv.size());
  double total = 0.0;
  for (std::size_t i = 0; i < full; ++i) total += sv[i] * sv[i];

  std::size_t keep = full;
  if (settings.max_rank > 0) keep = std::min(keep, settings.max_rank);
  if (full > 0 && settings.rel_tol > 0.0) {
    const double cut = settings.rel_tol * sv[0];
    while (keep > 1 && sv[static_cast<Eigen::Index>(keep - 1)] < cut) --keep;
  }
  keep = std::max<std::size_t>(keep, 1);

  SvdResult out;
  double kept = 0.0;
  out.s.resize(keep);
  for (std::size_t i = 0; i < keep; ++i) {
    out.s[i] = sv[static_cast<Eigen::Index>(i)];
    kept += out.s[i] * out.s[i];
  }
  out.discarded_weight = std::max(0.0, total - kept);
  out.kept_weight = total > 0.0 ? std::min(1.0, kept / total) : 1.0;

  Shape u_shape = row_shape;
  u_shape.push_back(keep);
  Shape v_shape{keep};
  v_shape.insert(v_shape.end(), col_shape.begin(), col_shape.end());
  out.u = Tensor(u_shape);
  out.v = Tensor(v_shape);
  MatMap um(out.u.raw(), static_cast<Eigen::Index>(rows),
            static_cast<Eigen::Index>(keep));
  MatMap vm(out.v.raw(), static_cast<Eigen::Index>(keep),
            static_cast<Eigen::Index>(cols));
  um = svd.matrixU().leftCols(static_cast<Eigen::Index>(keep));
  vm = svd.matrixV().leftCols(static_cast<Eigen::Index>(keep)).transpose();
  return out;
}

std::pair<Tensor, Tensor> qr_split(const Tensor& a, std::size_t n_row_axes) {
  if (n_row_axes == 0 || n_row_axes >= a.rank()) {
    throw Error(ErrorKind::kIndex, "qr_split: bad split");
  }
  Shape row_shape(a.shape().begin(), a.shape().begin() + n_row_axes);
  Shape col_shape(a.shape().begin() + n_row_axes, a.shape().end());
  const std::size_t rows = shape_size(row_shape);
  const std::size_t cols = shape_size(col_shape);
  const std::size_t k = std::min(rows, cols);
  ConstMatMap mat(a.raw(), static_cast<Eigen::Index>(rows),
                  static_cast<Eigen::Index>(cols));
  Eigen::HouseholderQR<Eigen::MatrixXd> qr{Eigen::MatrixXd(mat)};

  row_shape.push_back(k);
  col_shape.insert(col_shape.begin(), k);
  Tensor q(row_shape), r(col_shape);
  MatMap qm(q.raw(), static_cast<Eigen::Index>(rows),
            static_cast<Eigen::Index>(k));
  MatMap rm(r.raw(), static_cast<Eigen::Index>(k),
            static_cast<Eigen::Index>(cols));
  qm = qr.householderQ() *
       Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(rows),
                                 static_cast<Eigen::Index>(k));
  rm = qr.matrixQR()
           .topRows(static_cast<Eigen::Index>(k))
           .template triangularView<Eigen::Upper>();
  return {std::move(q), std::move(r)};
}

}  // namespace pepsgen
