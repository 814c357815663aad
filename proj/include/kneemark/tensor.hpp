#pragma once

#include <Eigen/Core>
#include <string>

#include "kneemark/errors.hpp"

namespace kneemark {

// NCHW extents. Lower-rank tensors leave the leading extents at 1: landmark
// coordinates are (B, M, 1, 2), scalars are (1, 1, 1, 1).
struct Shape {
  int n = 1;
  int c = 1;
  int h = 1;
  int w = 1;

  Eigen::Index size() const { return Eigen::Index(n) * c * h * w; }
  Eigen::Index plane() const { return Eigen::Index(h) * w; }
  bool operator==(const Shape&) const = default;
  std::string str() const {
    return "(" + std::to_string(n) + ", " + std::to_string(c) + ", " + std::to_string(h) + ", " +
           std::to_string(w) + ")";
  }
};

template <typename Scalar>
class Tensor {
 public:
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

  Tensor() = default;
  explicit Tensor(const Shape& shape) : shape_(shape), data_(Array::Zero(shape.size())) {}
  Tensor(const Shape& shape, Array data) : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.size()) throw ShapeError("tensor data length does not match shape " + shape_.str());
  }

  static Tensor constant(const Shape& shape, Scalar value) { return Tensor(shape, Array::Constant(shape.size(), value)); }

  const Shape& shape() const { return shape_; }
  Eigen::Index size() const { return data_.size(); }
  bool empty() const { return data_.size() == 0; }

  Array& data() { return data_; }
  const Array& data() const { return data_; }

  Scalar* plane(int n, int c) { return data_.data() + (Eigen::Index(n) * shape_.c + c) * shape_.plane(); }
  const Scalar* plane(int n, int c) const { return data_.data() + (Eigen::Index(n) * shape_.c + c) * shape_.plane(); }
  // Samples are contiguous (C * H * W) blocks.
  Scalar* sample(int n) { return plane(n, 0); }
  const Scalar* sample(int n) const { return plane(n, 0); }

  Scalar& operator()(int n, int c, int y, int x) { return plane(n, c)[Eigen::Index(y) * shape_.w + x]; }
  Scalar operator()(int n, int c, int y, int x) const { return plane(n, c)[Eigen::Index(y) * shape_.w + x]; }

  template <typename Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(shape_, data_.template cast<Other>());
  }

  bool all_finite() const { return data_.isFinite().all(); }

 private:
  Shape shape_{0, 0, 0, 0};
  Array data_;
};

}  // namespace kneemark
