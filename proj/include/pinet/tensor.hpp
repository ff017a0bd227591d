#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace pinet {

using Shape = std::vector<std::size_t>;

std::string to_string(const Shape& shape);
std::size_t element_count(const Shape& shape);

/// Dense row-major tensor of doubles.
///
/// Rank-2 tensors used by the network code follow a batch-first layout:
/// row i holds sample i. That leading batch dimension is the only place
/// where any operation broadcasts (see broadcast_rows); everything else is
/// shape-checked and throws ShapeError on mismatch.
class Tensor {
 public:
  /// Rank-0 scalar holding 0.
  Tensor();
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double value);
  static Tensor vector(std::initializer_list<double> values);
  static Tensor vector(std::vector<double> values);
  /// Rank-2 tensor from nested rows; all rows must have equal length.
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), 1.0); }
  static Tensor identity(std::size_t n);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t extent(std::size_t axis) const;
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  double operator[](std::size_t flat) const { return data_[flat]; }
  double& operator[](std::size_t flat) { return data_[flat]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
  double& operator()(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }

  /// Bounds-checked element access by multi-index.
  double at(std::span<const std::size_t> index) const;
  double at(std::initializer_list<std::size_t> index) const;

  /// Scalar value of a single-element tensor.
  double item() const;

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

Tensor zeros_like(const Tensor& t);
Tensor ones_like(const Tensor& t);

// Elementwise arithmetic. Shapes must match exactly.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);

/// Rank-2 matrix product (m x k)(k x n).
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);

/// Rows [begin, end) of a tensor along axis 0.
Tensor slice(const Tensor& a, std::size_t begin, std::size_t end);
/// Gathers the listed rows (axis 0) in order.
Tensor take_rows(const Tensor& a, std::span<const std::size_t> rows);
/// Concatenation along `axis`; all other extents must agree.
Tensor concat(std::span<const Tensor> parts, std::size_t axis = 0);

/// Repeats a length-n vector (rank-1, or 1 x n) into a rows x n matrix.
Tensor broadcast_rows(const Tensor& v, std::size_t rows);
/// Column sums of a rank-2 tensor; inverse of broadcast_rows for gradients.
Tensor sum_rows(const Tensor& a);

/// Column-wise Kronecker product: (d1 x k), (d2 x k) -> (d1*d2 x k).
Tensor khatri_rao(const Tensor& a, const Tensor& b);

/// Contracts mode `mode` of `w` against `v`. Modes are numbered from 1 as
/// in the usual tensor notation, so mode 1 is the leading axis.
Tensor mode_vec_product(const Tensor& w, const Tensor& v, std::size_t mode);

/// Per-row standardisation: (x - mean) / sqrt(var + eps) across columns.
Tensor instance_norm(const Tensor& a, double eps);

double sum(const Tensor& a);
double dot(const Tensor& a, const Tensor& b);
double norm(const Tensor& a);
double max_abs(const Tensor& a);
double max_abs_diff(const Tensor& a, const Tensor& b);
bool all_finite(const Tensor& a);

}  // namespace pinet
