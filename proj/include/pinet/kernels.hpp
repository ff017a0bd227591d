#pragma once

// Raw dense kernels behind the Tensor operations.
//
// pinet::kernels holds the OpenMP versions used by the library;
// pinet::reference holds plain serial loops kept for testing and
// benchmarking. Every kernel computes each output element with the same
// sequence of floating-point operations in both namespaces, so results are
// bit-identical regardless of thread count.

#include <cstddef>
#include <span>

namespace pinet::kernels {

/// c (m x n) = a (m x k) * b (k x n), row-major.
void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n);

void add(std::span<const double> a, std::span<const double> b, std::span<double> out);
void hadamard(std::span<const double> a, std::span<const double> b, std::span<double> out);

/// out (d1*d2 x k) from a (d1 x k) and b (d2 x k).
void khatri_rao(std::span<const double> a, std::span<const double> b, std::span<double> out,
                std::size_t d1, std::size_t d2, std::size_t k);

/// Row-wise (x - mean) / sqrt(var + eps) on an m x n matrix.
void instance_norm(std::span<const double> a, std::span<double> out, std::size_t m,
                   std::size_t n, double eps);

}  // namespace pinet::kernels

namespace pinet::reference {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n);
void add(std::span<const double> a, std::span<const double> b, std::span<double> out);
void hadamard(std::span<const double> a, std::span<const double> b, std::span<double> out);
void khatri_rao(std::span<const double> a, std::span<const double> b, std::span<double> out,
                std::size_t d1, std::size_t d2, std::size_t k);
void instance_norm(std::span<const double> a, std::span<double> out, std::size_t m,
                   std::size_t n, double eps);

}  // namespace pinet::reference
