#include "pinet/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "pinet/checkpoint.hpp"
#include "pinet/error.hpp"
#include "pinet/grad_check.hpp"
#include "pinet/io.hpp"
#include "pinet/oracle.hpp"
#include "pinet/rng.hpp"

namespace pinet::verify {

namespace {

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

Tensor uniform_points(std::size_t n, std::size_t d, Rng& rng) {
  Tensor t(Shape{n, d});
  for (double& v : t.data()) v = rng.uniform(-1.0, 1.0);
  return t;
}

std::string spec_name(const PolyBlockSpec& s) {
  std::ostringstream os;
  os << to_string(s.variant) << "(d=" << s.input_dim << ",o=" << s.output_dim << ",N=" << s.order;
  if (s.variant != Variant::kHighOrderResidual) os << ",k=" << s.rank;
  if (s.variant == Variant::kNcp || s.variant == Variant::kNcpSkip) os << ",w=" << s.omega();
  if (s.stabilizer != Stabilizer::kNone) os << ",stab=" << to_string(s.stabilizer);
  if (s.activation != Activation::kNone) os << ",act=" << to_string(s.activation);
  os << ")";
  return os.str();
}

std::string net_name(const ProductNet& net) {
  std::string s;
  for (const auto& b : net.blocks()) s += (s.empty() ? "" : "->") + spec_name(b.spec);
  return s;
}

std::vector<PolyBlockSpec> grid_specs(const OracleGridConfig& cfg) {
  std::vector<PolyBlockSpec> specs;
  for (Variant v : cfg.variants)
    for (std::size_t d : cfg.input_dims)
      for (std::size_t n : cfg.orders) {
        if (v == Variant::kHighOrderResidual) {
          specs.push_back({.variant = v, .order = n, .input_dim = d, .output_dim = d});
          continue;
        }
        for (std::size_t k : cfg.ranks)
          for (std::size_t o : cfg.output_dims) {
            if (v == Variant::kCcp) {
              specs.push_back({.variant = v, .order = n, .rank = k, .input_dim = d, .output_dim = o});
              continue;
            }
            for (std::size_t w : cfg.bias_dims)
              specs.push_back({.variant = v, .order = n, .rank = k, .input_dim = d, .output_dim = o,
                               .bias_dim = w});
          }
      }
  return specs;
}

}  // namespace

bool SuiteResult::passed() const { return failures() == 0; }

std::size_t SuiteResult::failures() const {
  return static_cast<std::size_t>(
      std::count_if(cases.begin(), cases.end(), [](const CaseResult& c) { return !c.passed; }));
}

double SuiteResult::worst_value() const {
  double w = 0.0;
  for (const auto& c : cases) w = std::max(w, c.value);
  return w;
}

std::function<Tensor(const Tensor&)> as_function(const ProductNet& net) {
  return [&net](const Tensor& z) { return net.forward(z); };
}

SuiteResult oracle_grid(const OracleGridConfig& cfg, std::uint64_t seed) {
  Stopwatch clock;
  SuiteResult suite{.name = "oracle-grid"};
  const auto specs = grid_specs(cfg);
  for (std::size_t i = 0; i < specs.size(); ++i) {
    for (std::size_t s = 0; s < cfg.seeds; ++s) {
      const PolyBlockSpec& spec = specs[i];
      const std::uint64_t case_seed = seed * 1000003 + i * 131 + s;
      const ProductNet net({{spec, init_params(spec, case_seed, InitScheme::kGaussian)}});
      CaseResult c{.name = spec_name(spec) + "#" + std::to_string(s), .threshold = cfg.tolerance};
      try {
        const auto fit = oracle::fit_dense(as_function(net), spec.input_dim, spec.output_dim,
                                           spec.degree(),
                                           {.seed = case_seed, .holdout_points = cfg.holdout_points});
        Rng rng = Rng::derive(case_seed, 77);
        const Tensor z = uniform_points(cfg.holdout_points, spec.input_dim, rng);
        const Tensor rec = net.forward(z);
        const Tensor dense = oracle::eval_dense(fit.poly, z);
        double pointwise = 0.0;
        for (std::size_t j = 0; j < rec.size(); ++j)
          pointwise = std::max(pointwise, std::abs(rec[j] - dense[j]) / (1.0 + std::abs(dense[j])));
        c.value = std::max(fit.residual, pointwise);
        c.passed = fit.residual < cfg.tolerance && pointwise < cfg.tolerance;
        std::ostringstream os;
        os << "fit residual " << fit.residual << ", pointwise " << pointwise << ", rank " << fit.rank;
        c.detail = os.str();
      } catch (const std::exception& e) {
        c.passed = false;
        c.value = INFINITY;
        c.detail = e.what();
      }
      suite.cases.push_back(std::move(c));
    }
  }
  suite.seconds = clock.seconds();
  return suite;
}

namespace {

void degree_sequences(const DegreeLawConfig& cfg, std::vector<std::size_t>& current,
                      std::size_t product, std::vector<std::vector<std::size_t>>& out) {
  if (!current.empty()) out.push_back(current);
  if (current.size() == cfg.max_blocks) return;
  for (std::size_t deg : cfg.block_degrees) {
    if (deg == 0 || product * deg > cfg.max_total_degree) continue;
    current.push_back(deg);
    degree_sequences(cfg, current, product * deg, out);
    current.pop_back();
  }
}

PolyBlockSpec random_block(Rng& rng, std::size_t input_dim, std::size_t order, bool allow_residual) {
  static constexpr Variant kVariants[] = {Variant::kCcp, Variant::kNcp, Variant::kNcpSkip,
                                          Variant::kHighOrderResidual};
  const Variant v = kVariants[rng.index(allow_residual ? 4 : 3)];
  PolyBlockSpec s{.variant = v, .order = order, .rank = 1 + rng.index(3), .input_dim = input_dim,
                  .output_dim = 1 + rng.index(3), .bias_dim = 1 + rng.index(2)};
  if (v == Variant::kHighOrderResidual) s.output_dim = input_dim;
  return s;
}

// Entries U[0.5, 1.5]: a composite's top coefficient is a product of powers
// of block coefficients, so small or sign-cancelling draws push it below the
// probe's relative tolerance.
PolyBlockParams bounded_params(const PolyBlockSpec& spec, std::uint64_t seed) {
  PolyBlockParams p = init_params(spec, seed, InitScheme::kGaussian);
  Rng rng = Rng::derive(seed, 21);
  for (auto& t : p.tensors)
    for (double& v : t.value.data()) v = rng.uniform(0.5, 1.5);
  return p;
}

}  // namespace

SuiteResult degree_law(const DegreeLawConfig& cfg, std::uint64_t seed) {
  Stopwatch clock;
  SuiteResult suite{.name = "degree-law"};
  std::vector<std::vector<std::size_t>> sequences;
  std::vector<std::size_t> current;
  degree_sequences(cfg, current, 1, sequences);
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    for (std::size_t s = 0; s < cfg.seeds; ++s) {
      const std::uint64_t case_seed = seed * 1000003 + i * 131 + s;
      Rng rng = Rng::derive(case_seed, 5);
      ProductNet net;
      std::size_t dim = 1 + rng.index(3);
      std::size_t expected = 1;
      for (std::size_t b = 0; b < sequences[i].size(); ++b) {
        const PolyBlockSpec spec = random_block(rng, dim, sequences[i][b], true);
        net.append({spec, bounded_params(spec, case_seed + 17 * b)});
        dim = spec.output_dim;
        expected *= spec.degree();
      }
      const std::size_t max_degree = cfg.max_total_degree + 2;
      const auto probe = oracle::probe_degree(as_function(net), net.input_dim(), case_seed, max_degree);
      CaseResult c{.name = net_name(net) + "#" + std::to_string(s),
                   .threshold = 0.0};
      c.value = probe.degree() ? std::abs(static_cast<double>(*probe.degree()) - static_cast<double>(expected))
                               : INFINITY;
      c.passed = probe.degree() == expected && net.total_degree() == expected;
      c.detail = "expected " + std::to_string(expected) + ", probed " +
                 (probe.degree() ? std::to_string(*probe.degree()) : std::string("exceeds max"));
      suite.cases.push_back(std::move(c));
    }
  }
  suite.seconds = clock.seconds();
  return suite;
}

SuiteResult grad_checks(const GradCheckSuiteConfig& cfg, std::uint64_t seed) {
  Stopwatch clock;
  SuiteResult suite{.name = "grad-check"};
  static constexpr Stabilizer kStabilizers[] = {Stabilizer::kNone, Stabilizer::kTanh,
                                                Stabilizer::kInstanceNorm};
  static constexpr Activation kActivations[] = {Activation::kNone, Activation::kTanh};
  for (std::size_t i = 0; i < cfg.instances; ++i) {
    const std::uint64_t case_seed = seed * 1000003 + i;
    Rng rng = Rng::derive(case_seed, 9);
    ProductNet net;
    const std::size_t blocks = i % 5 == 4 ? 2 : 1;
    std::size_t dim = 1 + rng.index(3);
    for (std::size_t b = 0; b < blocks; ++b) {
      PolyBlockSpec spec = random_block(rng, dim, 1 + rng.index(3), true);
      spec.stabilizer = kStabilizers[rng.index(3)];
      spec.activation = kActivations[rng.index(2)];
      net.append({spec, init_params(spec, case_seed + b, InitScheme::kGaussian)});
      dim = spec.output_dim;
    }
    const std::size_t batch = 4;
    Rng data_rng = Rng::derive(case_seed, 10);
    const Tensor z = uniform_points(batch, net.input_dim(), data_rng);
    const bool classify = net.output_dim() >= 2 && rng.index(2) == 1;
    Tensor y(Shape{batch, net.output_dim()});
    for (std::size_t r = 0; r < batch; ++r) {
      if (classify) {
        y(r, data_rng.index(net.output_dim())) = 1.0;
      } else {
        for (std::size_t j = 0; j < net.output_dim(); ++j) y(r, j) = data_rng.uniform(-1.0, 1.0);
      }
    }

    ad::Graph graph;
    const auto out = net.build(graph, graph.input("z"));
    const auto loss = classify ? graph.softmax_cross_entropy(out, graph.input("y"))
                               : graph.mean_squared_error(out, graph.input("y"));
    ad::Bindings fixed{{"z", z}, {"y", y}};
    auto bind = [&](const ParamMap& p) {
      ad::Bindings b = fixed;
      b.insert(p.begin(), p.end());
      return b;
    };
    const auto report = grad_check(
        [&](const ParamMap& p) { return graph.forward(bind(p), loss).item(); },
        [&](const ParamMap& p) {
          graph.forward(bind(p), loss);
          return graph.backward(loss);
        },
        net.parameters(),
        {.step = cfg.step, .tolerance = cfg.tolerance, .absolute_floor = cfg.absolute_floor});
    CaseResult c{.name = net_name(net) + (classify ? "+softmax-ce" : "+mse"),
                 .passed = report.passed(),
                 .value = report.max_relative_error(),
                 .threshold = cfg.tolerance};
    for (const auto& e : report.entries) {
      if (e.passed) continue;
      std::ostringstream os;
      os << e.name << "[" << e.worst_index << "] analytic " << e.analytic << " numeric " << e.numeric
         << "; ";
      c.detail += os.str();
    }
    suite.cases.push_back(std::move(c));
  }
  suite.seconds = clock.seconds();
  return suite;
}

SuiteResult checkpoint_checks(const std::filesystem::path& path, const CheckpointCheckConfig& cfg,
                              std::uint64_t seed) {
  Stopwatch clock;
  SuiteResult suite{.name = "checkpoint"};
  const auto bytes = read_file(path);
  DecodedCheckpoint decoded;
  try {
    decoded = decode_checkpoint(bytes);
  } catch (const std::exception& e) {
    suite.cases.push_back({.name = "decode", .passed = false, .value = 1, .detail = e.what()});
    suite.seconds = clock.seconds();
    return suite;
  }
  suite.cases.push_back({.name = "decode", .passed = true});
  suite.cases.push_back({.name = "checksum",
                         .passed = decoded.checksum_ok,
                         .value = decoded.checksum_ok ? 0.0 : 1.0,
                         .detail = decoded.checksum_ok ? "crc32 matches" : "crc32 mismatch"});
  const ProductNet& net = decoded.net;

  if (decoded.witness) {
    const Tensor now = net.forward(decoded.witness->inputs);
    double worst = 0.0;
    const Tensor& stored = decoded.witness->outputs;
    const bool shape_ok = now.shape() == stored.shape();
    if (shape_ok) {
      for (std::size_t i = 0; i < now.size(); ++i) {
        const double err = std::abs(now[i] - stored[i]) / (1.0 + std::abs(stored[i]));
        worst = std::isnan(err) ? INFINITY : std::max(worst, err);
      }
    }
    suite.cases.push_back({.name = "witness",
                           .passed = shape_ok && worst <= cfg.witness_tolerance,
                           .value = shape_ok ? worst : INFINITY,
                           .threshold = cfg.witness_tolerance,
                           .detail = shape_ok ? "" : "witness shape mismatch"});
  }

  if (!net.is_polynomial()) {
    suite.cases.push_back({.name = "polynomial-checks",
                           .passed = true,
                           .detail = "skipped: network has a stabilizer or activation"});
    suite.seconds = clock.seconds();
    return suite;
  }
  const std::size_t declared = net.total_degree();
  const auto probe = oracle::probe_degree(as_function(net), net.input_dim(), seed, declared + 2);
  suite.cases.push_back({.name = "degree",
                         .passed = probe.degree() == declared,
                         .value = probe.degree() ? std::abs(static_cast<double>(*probe.degree()) -
                                                            static_cast<double>(declared))
                                                 : INFINITY,
                         .detail = "declared " + std::to_string(declared) + ", probed " +
                                   (probe.degree() ? std::to_string(*probe.degree()) : "exceeds max")});
  if (oracle::basis_size(net.input_dim(), declared) > cfg.max_basis) {
    suite.cases.push_back({.name = "oracle-fit",
                           .passed = true,
                           .detail = "skipped: basis C(" +
                                     std::to_string(net.input_dim() + declared) + "," +
                                     std::to_string(declared) + ") exceeds budget"});
  } else {
    CaseResult c{.name = "oracle-fit", .threshold = cfg.fit_tolerance};
    try {
      const auto fit = oracle::fit_dense(as_function(net), net.input_dim(), net.output_dim(), declared,
                                         {.seed = seed, .max_basis = cfg.max_basis});
      c.value = fit.residual;
      c.passed = fit.residual < cfg.fit_tolerance;
    } catch (const std::exception& e) {
      c.value = INFINITY;
      c.detail = e.what();
    }
    suite.cases.push_back(std::move(c));
  }
  suite.seconds = clock.seconds();
  return suite;
}

}  // namespace pinet::verify
