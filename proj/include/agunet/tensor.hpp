#pragma once

#include <Eigen/Core>

#include <array>
#include <cassert>
#include <sstream>
#include <string>

#include "agunet/errors.hpp"

namespace agunet {

using Index = Eigen::Index;

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Extents of a dense NCHW array. Weights reuse the same layout
/// (out, in/groups, kh, kw); per-channel vectors are (1, C, 1, 1).
struct Shape {
  Index n = 0;
  Index c = 0;
  Index h = 0;
  Index w = 0;

  constexpr Index size() const { return n * c * h * w; }
  constexpr Index plane() const { return h * w; }
  constexpr bool operator==(const Shape&) const = default;

  std::string str() const {
    std::ostringstream os;
    os << n << 'x' << c << 'x' << h << 'x' << w;
    return os.str();
  }
};

/// Dense real-valued feature map stored contiguously in NCHW order.
template <typename Scalar>
class Tensor {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using SampleMap = Eigen::Map<RowMatrix<Scalar>>;
  using ConstSampleMap = Eigen::Map<const RowMatrix<Scalar>>;

  Tensor() = default;
  explicit Tensor(const Shape& shape) : shape_(shape), data_(Vector::Zero(shape.size())) {}
  Tensor(const Shape& shape, Scalar fill) : shape_(shape), data_(Vector::Constant(shape.size(), fill)) {}
  Tensor(const Shape& shape, Vector data) : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.size()) {
      throw ConfigurationError("tensor data size " + std::to_string(data_.size()) +
                               " does not match shape " + shape_.str());
    }
  }

  static Tensor Zero(const Shape& shape) { return Tensor(shape); }
  static Tensor Constant(const Shape& shape, Scalar value) { return Tensor(shape, value); }

  const Shape& shape() const { return shape_; }
  Index size() const { return shape_.size(); }
  bool empty() const { return shape_.size() == 0; }

  Vector& flat() { return data_; }
  const Vector& flat() const { return data_; }
  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }

  Index offset(Index n, Index c, Index h, Index w) const {
    return ((n * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }
  Scalar& operator()(Index n, Index c, Index h, Index w) { return data_[offset(n, c, h, w)]; }
  Scalar operator()(Index n, Index c, Index h, Index w) const { return data_[offset(n, c, h, w)]; }

  Scalar* plane(Index n, Index c) { return data() + offset(n, c, 0, 0); }
  const Scalar* plane(Index n, Index c) const { return data() + offset(n, c, 0, 0); }

  /// Sample n viewed as a (channels x H*W) row-major matrix.
  SampleMap sample(Index n) { return SampleMap(plane(n, 0), shape_.c, shape_.plane()); }
  ConstSampleMap sample(Index n) const { return ConstSampleMap(plane(n, 0), shape_.c, shape_.plane()); }

  void set_zero() { data_.setZero(); }

  template <typename Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(shape_, data_.template cast<Other>());
  }

 private:
  Shape shape_;
  Vector data_;
};

}  // namespace agunet
