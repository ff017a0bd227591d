#include "pinet/oracle.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>

#include "pinet/error.hpp"
#include "pinet/rng.hpp"

namespace pinet::oracle {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void compositions(std::size_t parts, unsigned total, std::vector<unsigned>& prefix,
                  std::vector<MultiIndex>& out) {
  if (prefix.size() + 1 == parts) {
    prefix.push_back(total);
    out.push_back(MultiIndex{prefix});
    prefix.pop_back();
    return;
  }
  for (unsigned e = total + 1; e-- > 0;) {
    prefix.push_back(e);
    compositions(parts, total - e, prefix, out);
    prefix.pop_back();
  }
}

double factorial(unsigned n) {
  double f = 1.0;
  for (unsigned i = 2; i <= n; ++i) f *= i;
  return f;
}

double binomial(std::size_t n, std::size_t k) {
  double r = 1.0;
  for (std::size_t i = 1; i <= k; ++i) r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
  return std::round(r);
}

Tensor as_batch(const Tensor& z, std::size_t d) {
  if (z.rank() == 1) {
    if (z.size() != d) throw ShapeError("dense polynomial expects " + std::to_string(d) + " inputs");
    return reshape(z, Shape{1, d});
  }
  if (z.rank() != 2 || z.cols() != d) {
    throw ShapeError("dense polynomial input has shape " + to_string(z.shape()));
  }
  return z;
}

}  // namespace

unsigned MultiIndex::degree() const {
  unsigned s = 0;
  for (auto e : exponents) s += e;
  return s;
}

std::string MultiIndex::to_string() const {
  std::ostringstream os;
  bool first = true;
  for (std::size_t i = 0; i < exponents.size(); ++i) {
    if (exponents[i] == 0) continue;
    if (!first) os << '*';
    first = false;
    os << 'z' << (i + 1);
    if (exponents[i] > 1) os << '^' << exponents[i];
  }
  return first ? "1" : os.str();
}

MultiIndex parse_monomial(std::string_view text, std::size_t d) {
  MultiIndex m{std::vector<unsigned>(d, 0)};
  if (text == "1") return m;
  auto fail = [&] { return std::invalid_argument("bad monomial '" + std::string(text) + "'"); };
  std::size_t pos = 0;
  auto read_number = [&]() {
    unsigned value = 0;
    const auto [end, ec] = std::from_chars(text.data() + pos, text.data() + text.size(), value);
    if (ec != std::errc{} || end == text.data() + pos) throw fail();
    pos = static_cast<std::size_t>(end - text.data());
    return value;
  };
  while (true) {
    if (pos >= text.size() || text[pos] != 'z') throw fail();
    ++pos;
    const unsigned var = read_number();
    if (var == 0 || var > d) throw fail();
    unsigned power = 1;
    if (pos < text.size() && text[pos] == '^') {
      ++pos;
      power = read_number();
    }
    m.exponents[var - 1] += power;
    if (pos == text.size()) return m;
    if (text[pos] != '*') throw fail();
    ++pos;
  }
}

std::vector<MultiIndex> enumerate_monomials(std::size_t d, std::size_t max_degree) {
  if (d == 0) throw std::invalid_argument("enumerate_monomials: d must be >= 1");
  std::vector<MultiIndex> out;
  std::vector<unsigned> prefix;
  for (unsigned g = 0; g <= max_degree; ++g) compositions(d, g, prefix, out);
  return out;
}

std::size_t basis_size(std::size_t d, std::size_t max_degree) {
  // C(d + N, N) built incrementally; each partial product is itself a
  // binomial coefficient, so the division is exact.
  std::size_t r = 1;
  for (std::size_t i = 1; i <= max_degree; ++i) {
    const std::size_t num = d + i;
    if (r > std::numeric_limits<std::size_t>::max() / num) return std::numeric_limits<std::size_t>::max();
    r = r * num / i;
  }
  return r;
}

double evaluate_monomial(const MultiIndex& m, std::span<const double> z) {
  double v = 1.0;
  for (std::size_t i = 0; i < m.exponents.size(); ++i)
    for (unsigned e = 0; e < m.exponents[i]; ++e) v *= z[i];
  return v;
}

Tensor monomial_design(std::span<const MultiIndex> basis, const Tensor& points) {
  if (points.rank() != 2) throw ShapeError("monomial_design: points must be n x d");
  Tensor design(Shape{points.rows(), basis.size()});
  for (std::size_t i = 0; i < points.rows(); ++i) {
    auto row = points.data().subspan(i * points.cols(), points.cols());
    for (std::size_t j = 0; j < basis.size(); ++j) design(i, j) = evaluate_monomial(basis[j], row);
  }
  return design;
}

DensePoly::DensePoly(std::size_t input_dim, std::size_t output_dim, std::size_t order)
    : input_dim_(input_dim),
      output_dim_(output_dim),
      order_(order),
      basis_(enumerate_monomials(input_dim, order)),
      coefficients_(Shape{basis_.size(), output_dim}) {}

void DensePoly::set_coefficients(Tensor coefficients) {
  if (coefficients.shape() != coefficients_.shape()) {
    throw ShapeError("DensePoly: coefficient block must be " + to_string(coefficients_.shape()));
  }
  coefficients_ = std::move(coefficients);
}

std::size_t DensePoly::index_of(const MultiIndex& m) const {
  auto it = std::find(basis_.begin(), basis_.end(), m);
  if (it == basis_.end()) throw std::out_of_range("monomial " + m.to_string() + " not in basis");
  return static_cast<std::size_t>(it - basis_.begin());
}

double DensePoly::coefficient(std::size_t output, const MultiIndex& m) const {
  return coefficients_(index_of(m), output);
}

void DensePoly::set_coefficient(std::size_t output, const MultiIndex& m, double value) {
  coefficients_(index_of(m), output) = value;
}

Tensor DensePoly::beta() const {
  Tensor b(Shape{output_dim_});
  for (std::size_t j = 0; j < output_dim_; ++j) b[j] = coefficients_(0, j);
  return b;
}

Tensor DensePoly::coefficient_tensor(std::size_t n) const {
  if (n == 0 || n > order_) throw std::out_of_range("coefficient_tensor: order out of range");
  Shape shape{output_dim_};
  for (std::size_t i = 0; i < n; ++i) shape.push_back(input_dim_);
  Tensor w(shape);
  const std::size_t cells = w.size() / output_dim_;
  std::vector<std::size_t> tuple(n);
  for (std::size_t flat = 0; flat < cells; ++flat) {
    std::size_t rest = flat;
    for (std::size_t p = n; p-- > 0;) {
      tuple[p] = rest % input_dim_;
      rest /= input_dim_;
    }
    MultiIndex m{std::vector<unsigned>(input_dim_, 0)};
    for (auto i : tuple) ++m.exponents[i];
    double perms = factorial(static_cast<unsigned>(n));
    for (auto e : m.exponents) perms /= factorial(e);
    const std::size_t row = index_of(m);
    for (std::size_t j = 0; j < output_dim_; ++j)
      w[j * cells + flat] = coefficients_(row, j) / perms;
  }
  return w;
}

std::size_t DensePoly::effective_degree(double tolerance) const {
  std::size_t deg = 0;
  for (std::size_t r = 0; r < basis_.size(); ++r)
    for (std::size_t j = 0; j < output_dim_; ++j)
      if (std::abs(coefficients_(r, j)) > tolerance) deg = std::max<std::size_t>(deg, basis_[r].degree());
  return deg;
}

Tensor eval_dense(const DensePoly& p, const Tensor& z) {
  const Tensor batch = as_batch(z, p.input_dim());
  Tensor y = matmul(monomial_design(p.basis(), batch), p.coefficients());
  return z.rank() == 1 ? reshape(y, Shape{p.output_dim()}) : y;
}

Tensor eval_dense_contraction(const DensePoly& p, const Tensor& z) {
  if (z.rank() != 1 || z.size() != p.input_dim()) {
    throw ShapeError("eval_dense_contraction: expected a single input of length " +
                     std::to_string(p.input_dim()));
  }
  Tensor y = p.beta();
  for (std::size_t n = 1; n <= p.order(); ++n) {
    Tensor w = p.coefficient_tensor(n);
    while (w.rank() > 1) w = mode_vec_product(w, z, w.rank());
    y = add(y, w);
  }
  return y;
}

LeastSquaresResult solve_least_squares(const Tensor& design, const Tensor& targets,
                                       double rank_tolerance) {
  if (design.rank() != 2) throw ShapeError("solve_least_squares: design must be rank 2");
  const Tensor rhs = targets.rank() == 1 ? reshape(targets, Shape{targets.size(), 1}) : targets;
  if (rhs.rank() != 2 || rhs.rows() != design.rows()) {
    throw ShapeError("solve_least_squares: targets " + to_string(targets.shape()) +
                     " do not match design " + to_string(design.shape()));
  }
  if (design.rows() < design.cols()) {
    throw ShapeError("solve_least_squares: need rows >= columns, got " + to_string(design.shape()));
  }
  Eigen::Map<const RowMatrix> a(design.data().data(), static_cast<Eigen::Index>(design.rows()),
                                static_cast<Eigen::Index>(design.cols()));
  Eigen::Map<const RowMatrix> b(rhs.data().data(), static_cast<Eigen::Index>(rhs.rows()),
                                static_cast<Eigen::Index>(rhs.cols()));

  Eigen::ColPivHouseholderQR<RowMatrix> qr(a);
  qr.setThreshold(rank_tolerance);
  const auto r_diag = qr.matrixR().diagonal().cwiseAbs();
  const double r_max = r_diag.size() ? r_diag.maxCoeff() : 0.0;
  const double r_min = r_diag.size() ? r_diag.minCoeff() : 0.0;

  LeastSquaresResult result;
  result.rank = static_cast<std::size_t>(qr.rank());
  result.rank_deficient = result.rank < design.cols();
  result.condition_estimate =
      r_min > 0.0 ? r_max / r_min : std::numeric_limits<double>::infinity();

  RowMatrix x;
  if (result.rank_deficient) {
    Eigen::CompleteOrthogonalDecomposition<RowMatrix> cod(a);
    cod.setThreshold(rank_tolerance);
    x = cod.solve(b);
  } else {
    x = qr.solve(b);
  }
  result.residual_norm = (a * x - b).norm();
  result.coefficients = Tensor(Shape{design.cols(), rhs.cols()},
                               std::vector<double>(x.data(), x.data() + x.size()));
  return result;
}

BudgetExceededError::BudgetExceededError(std::size_t d, std::size_t order, std::size_t basis,
                                         std::size_t budget)
    : std::invalid_argument("basis size C(" + std::to_string(d + order) + "," +
                            std::to_string(order) + ")=" + std::to_string(basis) +
                            " exceeds budget " + std::to_string(budget)),
      basis_(basis) {}

IllConditionedError::IllConditionedError(double condition, std::size_t rank, std::size_t columns)
    : std::runtime_error("ill-conditioned design matrix: rank " + std::to_string(rank) + " of " +
                         std::to_string(columns) + ", condition estimate " +
                         std::to_string(condition)),
      condition_(condition) {}

DenseFit fit_dense(const BatchFunction& f, std::size_t input_dim, std::size_t output_dim,
                   std::size_t max_order, const FitOptions& options) {
  const std::size_t basis = basis_size(input_dim, max_order);
  if (basis > options.max_basis) {
    throw BudgetExceededError(input_dim, max_order, basis, options.max_basis);
  }
  const double factor = std::max(2.0, options.sample_factor);
  const auto samples = static_cast<std::size_t>(std::ceil(factor * static_cast<double>(basis)));
  const std::size_t holdout = std::max<std::size_t>(1, options.holdout_points);

  Rng rng(options.seed);
  Tensor fit_points(Shape{samples, input_dim});
  for (auto& v : fit_points.data()) v = rng.uniform(-1.0, 1.0);
  Tensor check_points(Shape{holdout, input_dim});
  for (auto& v : check_points.data()) v = rng.uniform(-1.0, 1.0);

  auto call = [&](const Tensor& pts) {
    Tensor y = f(pts);
    if (y.rank() != 2 || y.rows() != pts.rows() || y.cols() != output_dim) {
      throw ShapeError("fit_dense: function returned " + to_string(y.shape()) + ", expected [" +
                       std::to_string(pts.rows()) + "x" + std::to_string(output_dim) + "]");
    }
    return y;
  };

  DensePoly poly(input_dim, output_dim, max_order);
  const Tensor design = monomial_design(poly.basis(), fit_points);
  const auto ls = solve_least_squares(design, call(fit_points), options.rank_tolerance);
  if (ls.rank_deficient) throw IllConditionedError(ls.condition_estimate, ls.rank, basis);
  poly.set_coefficients(ls.coefficients);

  const Tensor truth = call(check_points);
  const Tensor approx = eval_dense(poly, check_points);
  double residual = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double r = std::abs(truth[i] - approx[i]) / (1.0 + std::abs(truth[i]));
    residual = std::isnan(r) ? r : std::max(residual, r);
    if (std::isnan(residual)) break;
  }
  return DenseFit{std::move(poly), residual, ls.condition_estimate, ls.rank, samples};
}

bool DegreeProbe::exceeds_max() const {
  return std::any_of(per_output.begin(), per_output.end(), [](const auto& d) { return !d; });
}

std::optional<std::size_t> DegreeProbe::degree() const {
  std::size_t m = 0;
  for (const auto& d : per_output) {
    if (!d) return std::nullopt;
    m = std::max(m, *d);
  }
  return m;
}

DegreeProbe probe_degree(const BatchFunction& f, std::size_t input_dim, std::uint64_t seed,
                         std::size_t max_degree, const ProbeOptions& options) {
  if (options.rays == 0) throw std::invalid_argument("probe_degree: rays must be positive");
  Rng rng(seed);
  const std::size_t top = max_degree + 1;
  // Stencils for difference orders 1 .. max_degree + 1 on every ray, in one batch.
  std::vector<std::size_t> first_row(top + 1);
  std::size_t per_ray = 0;
  for (std::size_t m = 1; m <= top; ++m) {
    first_row[m] = per_ray;
    per_ray += m + 1;
  }
  Tensor points(Shape{per_ray * options.rays, input_dim});
  for (std::size_t ray = 0; ray < options.rays; ++ray) {
    Tensor direction(Shape{input_dim});
    double len = 0.0;
    while (len < 1e-3) {
      for (auto& v : direction.data()) v = rng.uniform(-1.0, 1.0);
      len = norm(direction);
    }
    direction = scale(direction, options.radius / len);
    // Off-centre base point: a symmetric stencil around t = 0 would miss the
    // odd differences of even polynomials.
    const double centre = rng.uniform(0.25, 0.75);
    for (std::size_t m = 1; m <= top; ++m) {
      for (std::size_t j = 0; j <= m; ++j) {
        const double t = centre + static_cast<double>(j) - static_cast<double>(m) / 2.0;
        for (std::size_t c = 0; c < input_dim; ++c)
          points(ray * per_ray + first_row[m] + j, c) = t * direction[c];
      }
    }
  }
  const Tensor values = f(points);
  if (values.rank() != 2 || values.rows() != points.rows()) {
    throw ShapeError("probe_degree: function returned " + to_string(values.shape()));
  }

  DegreeProbe probe;
  probe.max_degree = max_degree;
  for (std::size_t out = 0; out < values.cols(); ++out) {
    std::optional<std::size_t> degree = 0;
    for (std::size_t ray = 0; ray < options.rays && degree; ++ray) {
      // Differences above the true degree vanish identically; lower ones can
      // vanish by accident at the sampled centre, so scan from the top.
      for (std::size_t m = top; m > *degree; --m) {
        double diff = 0.0, scale_sum = 0.0;
        for (std::size_t j = 0; j <= m; ++j) {
          const double w = binomial(m, j);
          const double g = values(ray * per_ray + first_row[m] + j, out);
          diff += ((m - j) % 2 == 0 ? w : -w) * g;
          scale_sum += w * std::abs(g);
        }
        const double rel = scale_sum > 0.0 ? std::abs(diff) / scale_sum : 0.0;
        if (!(rel <= options.tolerance)) {
          degree = m == top ? std::nullopt : std::optional<std::size_t>(m);
          break;
        }
      }
    }
    probe.per_output.push_back(degree);
  }
  return probe;
}

}  // namespace pinet::oracle
