#include "pinet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "pinet/error.hpp"
#include "pinet/kernels.hpp"

namespace pinet {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
}

void require_rank(const Tensor& a, std::size_t rank, const char* op) {
  if (a.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     to_string(a.shape()));
  }
}

template <typename F>
Tensor map(const Tensor& a, F f) {
  Tensor out(a.shape());
  auto src = a.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = f(src[i]);
  return out;
}

}  // namespace

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

std::size_t element_count(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

Tensor::Tensor() : data_(1, 0.0) {}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  for (auto e : shape_) {
    if (e == 0) throw ShapeError("Tensor: zero extent in shape " + to_string(shape_));
  }
  data_.assign(element_count(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  for (auto e : shape_) {
    if (e == 0) throw ShapeError("Tensor: zero extent in shape " + to_string(shape_));
  }
  if (element_count(shape_) != data_.size()) {
    throw ShapeError("Tensor: shape " + to_string(shape_) + " needs " +
                     std::to_string(element_count(shape_)) + " values, got " +
                     std::to_string(data_.size()));
  }
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, std::vector<double>{value}); }

Tensor Tensor::vector(std::initializer_list<double> values) {
  return vector(std::vector<double>(values));
}

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor(Shape{n}, std::move(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  if (rows.size() == 0) throw ShapeError("Tensor::matrix: no rows");
  const std::size_t cols = rows.begin()->size();
  std::vector<double> values;
  values.reserve(rows.size() * cols);
  for (const auto& row : rows) {
    if (row.size() != cols) throw ShapeError("Tensor::matrix: ragged rows");
    values.insert(values.end(), row.begin(), row.end());
  }
  return Tensor(Shape{rows.size(), cols}, std::move(values));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t(Shape{n, n});
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

std::size_t Tensor::extent(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw ShapeError("extent: axis " + std::to_string(axis) + " out of range for " +
                     to_string(shape_));
  }
  return shape_[axis];
}

std::size_t Tensor::rows() const {
  require_rank(*this, 2, "rows");
  return shape_[0];
}

std::size_t Tensor::cols() const {
  require_rank(*this, 2, "cols");
  return shape_[1];
}

double Tensor::at(std::span<const std::size_t> index) const {
  if (index.size() != shape_.size()) throw ShapeError("at: index rank mismatch");
  std::size_t flat = 0;
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= shape_[i]) throw ShapeError("at: index out of range");
    flat = flat * shape_[i] + index[i];
  }
  return data_[flat];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
  return at(std::span<const std::size_t>(index.begin(), index.size()));
}

double Tensor::item() const {
  if (data_.size() != 1) throw ShapeError("item: tensor has " + std::to_string(data_.size()) + " elements");
  return data_[0];
}

Tensor zeros_like(const Tensor& t) { return Tensor(t.shape(), 0.0); }
Tensor ones_like(const Tensor& t) { return Tensor(t.shape(), 1.0); }

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out(a.shape());
  kernels::add(a.data(), b.data(), out.data());
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "hadamard");
  Tensor out(a.shape());
  kernels::hadamard(a.data(), b.data(), out.data());
  return out;
}

Tensor scale(const Tensor& a, double s) {
  return map(a, [s](double x) { return x * s; });
}

Tensor tanh(const Tensor& a) {
  return map(a, [](double x) { return std::tanh(x); });
}

Tensor relu(const Tensor& a) {
  return map(a, [](double x) { return x > 0.0 ? x : 0.0; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions differ " + to_string(a.shape()) + " * " +
                     to_string(b.shape()));
  }
  Tensor out(Shape{a.rows(), b.cols()});
  kernels::matmul(a.data(), b.data(), out.data(), a.rows(), a.cols(), b.cols());
  return out;
}

Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  const std::size_t m = a.rows(), n = a.cols();
  Tensor out(Shape{n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out(j, i) = a(i, j);
  return out;
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (element_count(shape) != a.size()) {
    throw ShapeError("reshape: cannot view " + to_string(a.shape()) + " as " + to_string(shape));
  }
  return Tensor(std::move(shape), a.values());
}

Tensor slice(const Tensor& a, std::size_t begin, std::size_t end) {
  if (a.rank() == 0) throw ShapeError("slice: scalar");
  if (begin >= end || end > a.extent(0)) {
    throw ShapeError("slice: bad range [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") for " + to_string(a.shape()));
  }
  Shape shape = a.shape();
  const std::size_t stride = a.size() / shape[0];
  shape[0] = end - begin;
  std::vector<double> values(a.values().begin() + static_cast<std::ptrdiff_t>(begin * stride),
                             a.values().begin() + static_cast<std::ptrdiff_t>(end * stride));
  return Tensor(std::move(shape), std::move(values));
}

Tensor take_rows(const Tensor& a, std::span<const std::size_t> rows) {
  if (a.rank() == 0) throw ShapeError("take_rows: scalar");
  if (rows.empty()) throw ShapeError("take_rows: empty selection");
  Shape shape = a.shape();
  const std::size_t stride = a.size() / shape[0];
  std::vector<double> values;
  values.reserve(rows.size() * stride);
  for (auto r : rows) {
    if (r >= shape[0]) throw ShapeError("take_rows: row " + std::to_string(r) + " out of range");
    auto first = a.values().begin() + static_cast<std::ptrdiff_t>(r * stride);
    values.insert(values.end(), first, first + static_cast<std::ptrdiff_t>(stride));
  }
  shape[0] = rows.size();
  return Tensor(std::move(shape), std::move(values));
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no operands");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) throw ShapeError("concat: axis out of range");
  Shape shape = first;
  shape[axis] = 0;
  for (const auto& p : parts) {
    if (p.rank() != first.size()) throw ShapeError("concat: rank mismatch");
    for (std::size_t i = 0; i < first.size(); ++i) {
      if (i != axis && p.shape()[i] != first[i]) {
        throw ShapeError("concat: extent mismatch " + to_string(first) + " vs " +
                         to_string(p.shape()));
      }
    }
    shape[axis] += p.shape()[axis];
  }
  // outer = product of extents before axis, inner = after axis.
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
  for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];
  std::vector<double> values;
  values.reserve(element_count(shape));
  for (std::size_t o = 0; o < outer; ++o) {
    for (const auto& p : parts) {
      const std::size_t chunk = p.shape()[axis] * inner;
      auto begin = p.values().begin() + static_cast<std::ptrdiff_t>(o * chunk);
      values.insert(values.end(), begin, begin + static_cast<std::ptrdiff_t>(chunk));
    }
  }
  return Tensor(std::move(shape), std::move(values));
}

Tensor broadcast_rows(const Tensor& v, std::size_t rows) {
  const bool row_vector = v.rank() == 2 && v.extent(0) == 1;
  if (v.rank() != 1 && !row_vector) {
    throw ShapeError("broadcast_rows: expected a vector, got " + to_string(v.shape()));
  }
  const std::size_t n = v.size();
  Tensor out(Shape{rows, n});
  for (std::size_t i = 0; i < rows; ++i) std::copy(v.data().begin(), v.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(i * n));
  return out;
}

Tensor sum_rows(const Tensor& a) {
  require_rank(a, 2, "sum_rows");
  Tensor out(Shape{a.cols()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out[j] += a(i, j);
  return out;
}

Tensor khatri_rao(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "khatri_rao");
  require_rank(b, 2, "khatri_rao");
  if (a.cols() != b.cols()) {
    throw ShapeError("khatri_rao: column counts differ " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
  Tensor out(Shape{a.rows() * b.rows(), a.cols()});
  kernels::khatri_rao(a.data(), b.data(), out.data(), a.rows(), b.rows(), a.cols());
  return out;
}

Tensor mode_vec_product(const Tensor& w, const Tensor& v, std::size_t mode) {
  require_rank(v, 1, "mode_vec_product");
  if (mode == 0 || mode > w.rank()) {
    throw ShapeError("mode_vec_product: mode " + std::to_string(mode) + " out of range for " +
                     to_string(w.shape()));
  }
  const std::size_t axis = mode - 1;
  if (w.extent(axis) != v.size()) {
    throw ShapeError("mode_vec_product: mode " + std::to_string(mode) + " has extent " +
                     std::to_string(w.extent(axis)) + ", vector has " + std::to_string(v.size()));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= w.shape()[i];
  for (std::size_t i = axis + 1; i < w.rank(); ++i) inner *= w.shape()[i];
  const std::size_t len = v.size();

  Shape shape;
  for (std::size_t i = 0; i < w.rank(); ++i)
    if (i != axis) shape.push_back(w.shape()[i]);
  Tensor out(shape);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t l = 0; l < len; ++l) {
      const double vl = v[l];
      const double* src = w.data().data() + (o * len + l) * inner;
      double* dst = out.data().data() + o * inner;
      for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i] * vl;
    }
  }
  return out;
}

Tensor instance_norm(const Tensor& a, double eps) {
  require_rank(a, 2, "instance_norm");
  Tensor out(a.shape());
  kernels::instance_norm(a.data(), out.data(), a.rows(), a.cols(), eps);
  return out;
}

double sum(const Tensor& a) {
  double s = 0.0;
  for (double x : a.data()) s += x;
  return s;
}

double dot(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(const Tensor& a) { return std::sqrt(dot(a, a)); }

double max_abs(const Tensor& a) {
  double m = 0.0;
  for (double x : a.data()) m = std::max(m, std::abs(x));
  return m;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

bool all_finite(const Tensor& a) {
  return std::all_of(a.data().begin(), a.data().end(), [](double x) { return std::isfinite(x); });
}

}  // namespace pinet
