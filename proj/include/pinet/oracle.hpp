#pragma once

// Brute-force verification engine. Represents a polynomial map R^d -> R^o
// explicitly in the monomial basis, recovers that representation from any
// black-box map by least squares, and measures realised degree.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "pinet/tensor.hpp"

namespace pinet::oracle {

/// Exponent vector of a monomial z_1^e_1 ... z_d^e_d.
struct MultiIndex {
  std::vector<unsigned> exponents;

  unsigned degree() const;
  /// "1", "z1", "z1^2*z3", ...
  std::string to_string() const;
  bool operator==(const MultiIndex&) const = default;
};

/// Inverse of MultiIndex::to_string over d variables ("1", "z2", "z1^2*z3").
/// Repeated factors multiply ("z1*z1" is z1^2). Throws std::invalid_argument.
MultiIndex parse_monomial(std::string_view text, std::size_t d);

/// All monomials of total degree <= max_degree over d variables, ordered by
/// degree and then lexicographically descending in the exponent vector:
/// 1, z1, z2, ..., z1^2, z1*z2, ..., zd^2, z1^3, ...
std::vector<MultiIndex> enumerate_monomials(std::size_t d, std::size_t max_degree);

/// C(d + N, N), saturating at SIZE_MAX.
std::size_t basis_size(std::size_t d, std::size_t max_degree);

double evaluate_monomial(const MultiIndex& m, std::span<const double> z);

/// One row per point (points is n x d), one column per basis monomial.
Tensor monomial_design(std::span<const MultiIndex> basis, const Tensor& points);

/// y = beta + sum_n W^[n] contracted n times with z, stored as one
/// coefficient per (monomial, output). Only the symmetric part of each
/// W^[n] is identifiable, so the monomial form is canonical.
class DensePoly {
 public:
  DensePoly(std::size_t input_dim, std::size_t output_dim, std::size_t order);

  std::size_t input_dim() const noexcept { return input_dim_; }
  std::size_t output_dim() const noexcept { return output_dim_; }
  std::size_t order() const noexcept { return order_; }
  const std::vector<MultiIndex>& basis() const noexcept { return basis_; }

  /// basis_size x output_dim; row 0 is the constant term.
  const Tensor& coefficients() const noexcept { return coefficients_; }
  void set_coefficients(Tensor coefficients);

  double coefficient(std::size_t output, const MultiIndex& m) const;
  void set_coefficient(std::size_t output, const MultiIndex& m, double value);
  Tensor beta() const;

  /// Symmetric coefficient tensor W^[n] of shape o x d x ... x d (n copies
  /// of d). A monomial coefficient is spread evenly over the permutations of
  /// its index tuple.
  Tensor coefficient_tensor(std::size_t n) const;

  /// Highest total degree with a coefficient above `tolerance` in magnitude.
  std::size_t effective_degree(double tolerance = 0.0) const;

 private:
  std::size_t index_of(const MultiIndex& m) const;

  std::size_t input_dim_;
  std::size_t output_dim_;
  std::size_t order_;
  std::vector<MultiIndex> basis_;
  Tensor coefficients_;
};

/// Monomial-basis evaluation; z is a d-vector or an n x d batch.
Tensor eval_dense(const DensePoly& p, const Tensor& z);
/// Same value via repeated mode-n vector products on coefficient_tensor(n).
/// Single d-vector only; used as an independent cross-check.
Tensor eval_dense_contraction(const DensePoly& p, const Tensor& z);

struct LeastSquaresResult {
  Tensor coefficients;  // columns x targets
  double residual_norm = 0.0;  // Frobenius norm of design * x - targets
  double condition_estimate = 0.0;
  std::size_t rank = 0;
  bool rank_deficient = false;
};

/// Minimum-norm least squares through a complete orthogonal decomposition.
/// Rank is decided with relative pivot threshold `rank_tolerance`; a
/// deficient system is flagged and still solved.
LeastSquaresResult solve_least_squares(const Tensor& design, const Tensor& targets,
                                       double rank_tolerance = 1e-10);

/// Black-box map evaluated on a batch: n x d in, n x o out.
using BatchFunction = std::function<Tensor(const Tensor&)>;

class BudgetExceededError : public std::invalid_argument {
 public:
  BudgetExceededError(std::size_t d, std::size_t order, std::size_t basis, std::size_t budget);
  std::size_t basis() const noexcept { return basis_; }

 private:
  std::size_t basis_;
};

class IllConditionedError : public std::runtime_error {
 public:
  IllConditionedError(double condition, std::size_t rank, std::size_t columns);
  double condition() const noexcept { return condition_; }

 private:
  double condition_;
};

struct FitOptions {
  std::uint64_t seed = 0;
  /// Fit samples = max(2, sample_factor) * basis size.
  double sample_factor = 3.0;
  std::size_t holdout_points = 200;
  std::size_t max_basis = 5000;
  double rank_tolerance = 1e-10;
};

struct DenseFit {
  DensePoly poly;
  /// max over held-out points and outputs of |f - p| / (1 + |f|).
  double residual = 0.0;
  double condition_estimate = 0.0;
  std::size_t rank = 0;
  std::size_t samples = 0;
};

/// Recovers monomial coefficients of `f` up to total degree `max_order`
/// from seeded uniform samples on [-1, 1]^d. Throws BudgetExceededError
/// when the basis is larger than options.max_basis and IllConditionedError
/// when the design matrix is numerically rank deficient.
DenseFit fit_dense(const BatchFunction& f, std::size_t input_dim, std::size_t output_dim,
                   std::size_t max_order, const FitOptions& options = {});

struct ProbeOptions {
  /// Vanishing differences measure <= 7e-14 on products of degree <= 9.
  double tolerance = 1e-6;
  /// Norm of each random ray direction.
  double radius = 4.0;
  /// Independent rays; the degree is the max over rays, which guards
  /// against a direction that nearly cancels the top homogeneous part.
  std::size_t rays = 3;
};

struct DegreeProbe {
  /// nullopt where no difference up to order max_degree + 1 vanished.
  std::vector<std::optional<std::size_t>> per_output;
  std::size_t max_degree = 0;

  bool exceeds_max() const;
  /// Max over outputs; nullopt when any output exceeds max_degree.
  std::optional<std::size_t> degree() const;
};

/// Restricts f to lines t -> f(t z0) for seeded random directions z0 and
/// reports, per output, the largest m whose m-th finite difference (unit
/// step, centred at a seeded offset t0) exceeds `tolerance` relative to
/// sum_j C(m, j) |g(t_j)|, maximised over rays. Differences above the true
/// degree vanish on every ray.
DegreeProbe probe_degree(const BatchFunction& f, std::size_t input_dim, std::uint64_t seed,
                         std::size_t max_degree, const ProbeOptions& options = {});

}  // namespace pinet::oracle
