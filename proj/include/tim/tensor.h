#pragma once

#include <array>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace tim {

// Extents of a tensor of rank 0..3. Rank 0 is a scalar with one element.
class Shape {
 public:
  static constexpr std::size_t kMaxRank = 3;

  Shape() = default;
  Shape(std::initializer_list<std::size_t> extents);
  static Shape FromVector(const std::vector<std::size_t>& extents);

  std::size_t rank() const { return rank_; }
  std::size_t operator[](std::size_t axis) const { return extents_[axis]; }
  std::size_t element_count() const;
  std::vector<std::size_t> to_vector() const;
  std::string to_string() const;

  friend bool operator==(const Shape& a, const Shape& b) {
    return a.rank_ == b.rank_ && a.extents_ == b.extents_;
  }

 private:
  std::array<std::size_t, kMaxRank> extents_{0, 0, 0};
  std::size_t rank_ = 0;
};

// Dense row-major tensor of doubles with value semantics.
class Tensor {
 public:
  Tensor() : shape_{}, data_(1, 0.0) {}
  Tensor(Shape shape, std::vector<double> data);

  static Tensor Zeros(Shape shape);
  static Tensor Full(Shape shape, double value);
  static Tensor Scalar(double value);
  static Tensor Matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor RowVector(std::span<const double> values);
  // Like the constructor, but also rejects NaN and infinity.
  static Tensor FromExternal(Shape shape, std::vector<double> data);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.rank(); }
  std::size_t size() const { return data_.size(); }
  // Rows/cols of a rank-2 tensor.
  std::size_t rows() const { return shape_[0]; }
  std::size_t cols() const { return shape_[1]; }

  std::span<const double> data() const { return data_; }
  std::span<double> mutable_data() { return data_; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double item() const;

  Tensor reshaped(Shape shape) const;
  bool all_finite() const;

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<double> data_;
};

// Value-level kernels. These are the forward rules the tape records; they are
// also usable directly for inference and as building blocks in tests.
Tensor matmul(const Tensor& a, const Tensor& b);
// Batched matmul over the leading axis: (B,m,k) x (B,k,n) -> (B,m,n).
Tensor batched_matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
// Softmax of each row of scale * a, with max subtraction.
Tensor softmax_rows(const Tensor& a, double scale);
Tensor softmax_scaled(const Tensor& row, double scale);
// Rotates pair (x[2j], x[2j+1]) of row i by angle i * base^(-2j/d).
Tensor rope_rotate(const Tensor& m, double base);
Tensor l2_normalize_rows(const Tensor& m, double eps = 1e-12);
double sigmoid(double x);

}  // namespace tim
