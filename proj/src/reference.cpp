#include <cmath>

#include "pinet/kernels.hpp"

namespace pinet::reference {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      c[i * n + j] = acc;
    }
  }
}

void add(std::span<const double> a, std::span<const double> b, std::span<double> out) {
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
}

void hadamard(std::span<const double> a, std::span<const double> b, std::span<double> out) {
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
}

void khatri_rao(std::span<const double> a, std::span<const double> b, std::span<double> out,
                std::size_t d1, std::size_t d2, std::size_t k) {
  for (std::size_t r = 0; r < k; ++r)
    for (std::size_t i = 0; i < d1; ++i)
      for (std::size_t j = 0; j < d2; ++j) out[(i * d2 + j) * k + r] = a[i * k + r] * b[j * k + r];
}

void instance_norm(std::span<const double> a, std::span<double> out, std::size_t m,
                   std::size_t n, double eps) {
  for (std::size_t i = 0; i < m; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += a[i * n + j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (a[i * n + j] - mean) * (a[i * n + j] - mean);
    var /= static_cast<double>(n);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = (a[i * n + j] - mean) * inv;
  }
}

}  // namespace pinet::reference
