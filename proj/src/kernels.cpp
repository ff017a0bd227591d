#include "pinet/kernels.hpp"

#include <cmath>
#include <cstdint>

namespace pinet::kernels {

namespace {
// Below this many multiply-adds the fork/join overhead dominates.
constexpr std::size_t kParallelWork = 1u << 15;

using Index = std::int64_t;
}  // namespace

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n) {
  const double* pa = a.data();
  const double* pb = b.data();
  double* pc = c.data();
  const Index rows = static_cast<Index>(m);
  // i-p-j order: the inner loop streams a row of b, while each c(i,j) still
  // accumulates its products in increasing p, like the naive reference.
#pragma omp parallel for schedule(static) if (m * k * n > kParallelWork)
  for (Index i = 0; i < rows; ++i) {
    double* crow = pc + i * n;
    for (std::size_t j = 0; j < n; ++j) crow[j] = 0.0;
    const double* arow = pa + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = arow[p];
      const double* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

void add(std::span<const double> a, std::span<const double> b, std::span<double> out) {
  const Index n = static_cast<Index>(out.size());
#pragma omp parallel for simd schedule(static) if (out.size() > kParallelWork)
  for (Index i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void hadamard(std::span<const double> a, std::span<const double> b, std::span<double> out) {
  const Index n = static_cast<Index>(out.size());
#pragma omp parallel for simd schedule(static) if (out.size() > kParallelWork)
  for (Index i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void khatri_rao(std::span<const double> a, std::span<const double> b, std::span<double> out,
                std::size_t d1, std::size_t d2, std::size_t k) {
  const Index outer = static_cast<Index>(d1);
#pragma omp parallel for schedule(static) if (d1 * d2 * k > kParallelWork)
  for (Index i = 0; i < outer; ++i) {
    for (std::size_t j = 0; j < d2; ++j) {
      double* row = out.data() + (i * d2 + j) * k;
      for (std::size_t r = 0; r < k; ++r) row[r] = a[i * k + r] * b[j * k + r];
    }
  }
}

void instance_norm(std::span<const double> a, std::span<double> out, std::size_t m,
                   std::size_t n, double eps) {
  const Index rows = static_cast<Index>(m);
#pragma omp parallel for schedule(static) if (m * n > kParallelWork)
  for (Index i = 0; i < rows; ++i) {
    const double* x = a.data() + i * n;
    double* y = out.data() + i * n;
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += x[j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (x[j] - mean) * (x[j] - mean);
    var /= static_cast<double>(n);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) y[j] = (x[j] - mean) * inv;
  }
}

}  // namespace pinet::kernels
