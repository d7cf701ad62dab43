#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "htr/errors.hpp"

namespace htr {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMatrixXd = RowMatrix<double>;

inline Index num_elements(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
}

inline std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

/// Dense row-major array of rank N. Layout conventions: sequences are
/// (batch, time, features), images are (batch, height, width, channels).
template <typename Scalar>
class BasicTensor {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using MatrixMap = Eigen::Map<RowMatrix<Scalar>>;
  using ConstMatrixMap = Eigen::Map<const RowMatrix<Scalar>>;

  BasicTensor() : shape_{0}, data_(0) {}

  explicit BasicTensor(Shape shape, Scalar fill = Scalar(0)) : shape_(std::move(shape)) {
    check_extents();
    data_ = Vector::Constant(num_elements(shape_), fill);
  }

  BasicTensor(Shape shape, std::span<const Scalar> values) : shape_(std::move(shape)) {
    check_extents();
    if (static_cast<Index>(values.size()) != num_elements(shape_)) {
      throw ShapeError("tensor " + to_string(shape_) + " needs " +
                       std::to_string(num_elements(shape_)) + " values, got " +
                       std::to_string(values.size()));
    }
    data_ = Eigen::Map<const Vector>(values.data(), static_cast<Index>(values.size()));
  }

  BasicTensor(Shape shape, std::initializer_list<Scalar> values)
      : BasicTensor(std::move(shape), std::span<const Scalar>(values.begin(), values.size())) {}

  template <typename Derived>
  static BasicTensor from_matrix(const Eigen::MatrixBase<Derived>& m) {
    BasicTensor t(Shape{m.rows(), m.cols()});
    t.matrix() = m;
    return t;
  }

  static BasicTensor scalar(Scalar v) {
    BasicTensor t(Shape{});
    t.data_[0] = v;
    return t;
  }

  const Shape& shape() const { return shape_; }
  Index rank() const { return static_cast<Index>(shape_.size()); }
  Index dim(Index axis) const { return shape_[static_cast<std::size_t>(axis)]; }
  Index size() const { return data_.size(); }

  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }
  std::span<Scalar> values() { return {data_.data(), static_cast<std::size_t>(data_.size())}; }
  std::span<const Scalar> values() const {
    return {data_.data(), static_cast<std::size_t>(data_.size())};
  }

  Vector& flat() { return data_; }
  const Vector& flat() const { return data_; }

  Scalar& operator[](Index i) { return data_[i]; }
  Scalar operator[](Index i) const { return data_[i]; }

  Scalar item() const {
    if (data_.size() != 1) throw ShapeError("item() on tensor " + to_string(shape_));
    return data_[0];
  }

  /// Views the tensor as (rows x cols); product must match size().
  MatrixMap matrix(Index rows, Index cols) {
    check_view(rows, cols);
    return MatrixMap(data_.data(), rows, cols);
  }
  ConstMatrixMap matrix(Index rows, Index cols) const {
    check_view(rows, cols);
    return ConstMatrixMap(data_.data(), rows, cols);
  }
  /// Rank-2 view; higher ranks fold leading axes into rows.
  MatrixMap matrix() { return matrix(size() / last_extent(), last_extent()); }
  ConstMatrixMap matrix() const { return matrix(size() / last_extent(), last_extent()); }

  Scalar& operator()(Index i, Index j) { return data_[i * shape_.back() + j]; }
  Scalar operator()(Index i, Index j) const { return data_[i * shape_.back() + j]; }

  Scalar& at(std::initializer_list<Index> idx) { return data_[offset(idx)]; }
  Scalar at(std::initializer_list<Index> idx) const { return data_[offset(idx)]; }

  BasicTensor reshaped(Shape shape) const {
    if (num_elements(shape) != size()) {
      throw ShapeError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
    }
    BasicTensor t = *this;
    t.shape_ = std::move(shape);
    return t;
  }

  template <typename Other>
  BasicTensor<Other> cast() const {
    BasicTensor<Other> t(shape_);
    t.flat() = data_.template cast<Other>();
    return t;
  }

  void fill(Scalar v) { data_.setConstant(v); }

  bool same_shape(const BasicTensor& other) const { return shape_ == other.shape_; }

  friend bool operator==(const BasicTensor& a, const BasicTensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  void check_extents() const {
    for (Index e : shape_) {
      if (e < 0) throw ShapeError("negative extent in " + to_string(shape_));
    }
  }
  void check_view(Index rows, Index cols) const {
    if (rows * cols != size()) {
      throw ShapeError("cannot view " + to_string(shape_) + " as " + std::to_string(rows) + "x" +
                       std::to_string(cols));
    }
  }
  Index last_extent() const { return shape_.empty() ? 1 : std::max<Index>(shape_.back(), 1); }
  Index offset(std::initializer_list<Index> idx) const {
    if (idx.size() != shape_.size()) throw ShapeError("index rank mismatch for " + to_string(shape_));
    Index off = 0;
    std::size_t k = 0;
    for (Index i : idx) off = off * shape_[k++] + i;
    return off;
  }

  Shape shape_;
  Vector data_;
};

using Tensor = BasicTensor<double>;
using TensorF = BasicTensor<float>;

}  // namespace htr
