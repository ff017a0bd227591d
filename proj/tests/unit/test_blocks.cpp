#include <gtest/gtest.h>

#include <cmath>

#include "pinet/autodiff.hpp"
#include "pinet/blocks.hpp"
#include "pinet/oracle.hpp"
#include "test_util.hpp"

namespace pinet {
namespace {

using testing::random_tensor;

PolyBlockParams params_of(std::initializer_list<std::pair<const char*, Tensor>> list) {
  PolyBlockParams p;
  for (auto& [name, t] : list) p.tensors.push_back({name, t});
  return p;
}

PolyBlockParams all_ones(const PolyBlockSpec& spec) {
  PolyBlockParams p;
  for (auto& [name, shape] : parameter_layout(spec)) p.tensors.push_back({name, Tensor::ones(shape)});
  p.get("beta") = Tensor::zeros({spec.output_dim});
  return p;
}

oracle::BatchFunction as_function(const PolyBlock& block) {
  return [block](const Tensor& z) { return forward_block(block, z); };
}

TEST(Ccp, HandExample) {
  const PolyBlockSpec spec{.variant = Variant::kCcp, .order = 2, .rank = 1, .input_dim = 2,
                           .output_dim = 1};
  const auto p = params_of({{"U1", Tensor::matrix({{1}, {0}})},
                            {"U2", Tensor::matrix({{0}, {1}})},
                            {"C", Tensor::matrix({{1}})},
                            {"beta", Tensor::vector({0})}});
  EXPECT_EQ(forward_ccp(spec, p, Tensor::vector({2, 3})), Tensor::vector({8}));
  // z1 + z1 z2 is what the dense oracle recovers.
  const auto fit = oracle::fit_dense(as_function({spec, p}), 2, 1, 2);
  EXPECT_LT(fit.residual, 1e-10);
  for (const auto& m : fit.poly.basis()) {
    const double expected = (m.to_string() == "z1" || m.to_string() == "z1*z2") ? 1.0 : 0.0;
    EXPECT_NEAR(fit.poly.coefficient(0, m), expected, 1e-10) << m.to_string();
  }
}

TEST(Ccp, N1IsAffine) {
  const PolyBlockSpec spec{.variant = Variant::kCcp, .order = 1, .rank = 3, .input_dim = 4,
                           .output_dim = 2};
  const auto p = init_params(spec, 3, InitScheme::kGaussian);
  const Tensor z = random_tensor({5, 4}, 1);
  const Tensor expected =
      add(matmul(matmul(z, p.get("U1")), transpose(p.get("C"))), broadcast_rows(p.get("beta"), 5));
  EXPECT_LE(max_abs_diff(forward_ccp(spec, p, z), expected), 1e-14);
}

TEST(Blocks, ZeroInputGivesBeta) {
  for (Variant v : {Variant::kCcp, Variant::kNcp, Variant::kNcpSkip}) {
    const PolyBlockSpec spec{.variant = v, .order = 3, .rank = 2, .input_dim = 3, .output_dim = 2,
                             .bias_dim = 2};
    const auto p = init_params(spec, 5, InitScheme::kGaussian);
    EXPECT_EQ(forward_block({spec, p}, Tensor::zeros({3})), p.get("beta")) << to_string(v);
  }
  const PolyBlockSpec hor{.variant = Variant::kHighOrderResidual, .order = 3, .input_dim = 3,
                          .output_dim = 3};
  EXPECT_EQ(forward_block({hor, init_params(hor, 5)}, Tensor::zeros({3})), Tensor::zeros({3}));
}

TEST(Ncp, HandExample) {
  const PolyBlockSpec spec{.variant = Variant::kNcp, .order = 2};
  EXPECT_EQ(forward_ncp(spec, all_ones(spec), Tensor::vector({2})), Tensor::vector({6}));
}

TEST(NcpSkip, HandExample) {
  const PolyBlockSpec spec{.variant = Variant::kNcpSkip, .order = 2};
  EXPECT_EQ(forward_ncp_skip(spec, all_ones(spec), Tensor::vector({2})), Tensor::vector({8}));
}

TEST(Ncp, RandomInstanceMatchesDenseOracle) {
  const PolyBlockSpec spec{.variant = Variant::kNcp, .order = 3, .rank = 2, .input_dim = 3,
                           .output_dim = 1, .bias_dim = 2};
  const PolyBlock block{spec, init_params(spec, 11, InitScheme::kGaussian)};
  const auto fit = oracle::fit_dense(as_function(block), 3, 1, 3);
  EXPECT_LT(fit.residual, 1e-9);
  const Tensor z = random_tensor({200, 3}, 12);
  const Tensor rec = forward_block(block, z);
  const Tensor dense = oracle::eval_dense(fit.poly, z);
  for (std::size_t i = 0; i < rec.size(); ++i)
    EXPECT_LE(std::abs(rec[i] - dense[i]), 1e-9 * (1 + std::abs(dense[i])));
}

// With S_n = I, B_1^T b_1 = 1 and B_n^T b_n = 0 for n >= 2 the NCP-Skip
// recursion becomes x_n = (A_n^T z) * x_{n-1} + x_{n-1}, the CCP recursion.
TEST(NcpSkip, ReducesToCcpWithIdentitySAndUnitBaseBias) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const PolyBlockSpec skip{.variant = Variant::kNcpSkip, .order = 3, .rank = 4, .input_dim = 3,
                             .output_dim = 2, .bias_dim = 1};
    PolyBlockParams p = init_params(skip, seed, InitScheme::kGaussian);
    for (std::size_t n = 2; n <= 3; ++n) p.get("S" + std::to_string(n)) = Tensor::identity(4);
    for (std::size_t n = 1; n <= 3; ++n) {
      p.get("B" + std::to_string(n)) = Tensor::ones({1, 4});
      p.get("b" + std::to_string(n)) = Tensor::vector({n == 1 ? 1.0 : 0.0});
    }
    const PolyBlockSpec ccp{.variant = Variant::kCcp, .order = 3, .rank = 4, .input_dim = 3,
                            .output_dim = 2};
    const auto q = params_of({{"U1", p.get("A1")},
                              {"U2", p.get("A2")},
                              {"U3", p.get("A3")},
                              {"C", p.get("C")},
                              {"beta", p.get("beta")}});
    const Tensor z = random_tensor({50, 3}, seed + 100);
    EXPECT_LE(max_abs_diff(forward_ncp_skip(skip, p, z), forward_ccp(ccp, q, z)), 1e-12);
  }
}

// S_n = 0 with B_n^T b_n = 1 instead collapses the recursion to the linear
// map x_N = sum_n A_n^T z.
TEST(NcpSkip, ZeroSAndUnitBiasIsLinear) {
  const PolyBlockSpec skip{.variant = Variant::kNcpSkip, .order = 3, .rank = 2, .input_dim = 2,
                           .output_dim = 1, .bias_dim = 1};
  PolyBlockParams p = init_params(skip, 3, InitScheme::kGaussian);
  for (std::size_t n = 2; n <= 3; ++n) p.get("S" + std::to_string(n)) = Tensor::zeros({2, 2});
  for (std::size_t n = 1; n <= 3; ++n) {
    p.get("B" + std::to_string(n)) = Tensor::ones({1, 2});
    p.get("b" + std::to_string(n)) = Tensor::ones({1});
  }
  const auto f = [&](const Tensor& z) { return forward_ncp_skip(skip, p, z); };
  EXPECT_EQ(oracle::probe_degree(f, 2, 1, 4).degree(), 1u);
}

TEST(HighOrderResidual, OrderOneIsPlainResidual) {
  const auto p = params_of({{"C", Tensor::identity(2)}});
  EXPECT_EQ(forward_high_order_residual(p, Tensor::vector({1, 2}), 1), Tensor::vector({2, 4}));
}

TEST(HighOrderResidual, OrderTwoHandExpansion) {
  for (double c : {1.0, -0.5, 2.0})
    for (double z : {2.0, -1.5, 0.25}) {
      const auto p = params_of({{"C", Tensor::matrix({{c}})}});
      EXPECT_DOUBLE_EQ(forward_high_order_residual(p, Tensor::vector({z}), 2)[0],
                       z + c * z + c * z * z);
    }
  const auto p = params_of({{"C", Tensor::matrix({{1}})}});
  EXPECT_EQ(forward_high_order_residual(p, Tensor::vector({2}), 2), Tensor::vector({8}));
}

TEST(HighOrderResidual, NonSquareRejected) {
  const auto p = params_of({{"C", Tensor::zeros({2, 3})}});
  EXPECT_THROW(forward_high_order_residual(p, Tensor::vector({1, 2, 3}), 2), std::invalid_argument);
  const PolyBlockSpec bad{.variant = Variant::kHighOrderResidual, .order = 2, .input_dim = 2,
                          .output_dim = 3};
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(Spec, ValidationRejectsZeros) {
  for (auto mutate : std::vector<void (*)(PolyBlockSpec&)>{
           [](PolyBlockSpec& s) { s.order = 0; }, [](PolyBlockSpec& s) { s.rank = 0; },
           [](PolyBlockSpec& s) { s.input_dim = 0; }, [](PolyBlockSpec& s) { s.output_dim = 0; }}) {
    PolyBlockSpec s;
    mutate(s);
    EXPECT_THROW(s.validate(), std::invalid_argument);
  }
  EXPECT_THROW(parse_variant("cp"), std::invalid_argument);
  EXPECT_EQ(parse_variant("ncp-skip"), Variant::kNcpSkip);
}

TEST(ParamCount, HandCounts) {
  EXPECT_EQ(param_count({.variant = Variant::kCcp, .order = 2, .rank = 1, .input_dim = 2,
                         .output_dim = 1}),
            6u);
  EXPECT_EQ(dense_param_count(2, 1, 2), 7u);
  EXPECT_EQ(param_count({.variant = Variant::kHighOrderResidual, .order = 3, .input_dim = 5,
                         .output_dim = 5}),
            25u);
}

TEST(ParamCount, MatchesPhysicalElementCounts) {
  Rng rng(2024);
  for (int i = 0; i < 50; ++i) {
    PolyBlockSpec s;
    s.variant = static_cast<Variant>(rng.index(4));
    s.order = 1 + rng.index(5);
    s.rank = 1 + rng.index(6);
    s.input_dim = 1 + rng.index(6);
    s.output_dim = s.variant == Variant::kHighOrderResidual ? s.input_dim : 1 + rng.index(6);
    s.bias_dim = rng.index(4);
    EXPECT_EQ(init_params(s, i).element_count(), param_count(s)) << i;
  }
}

TEST(ParamCount, ThousandfoldSavingAtWidth64) {
  const PolyBlockSpec s{.variant = Variant::kCcp, .order = 3, .rank = 64, .input_dim = 64,
                        .output_dim = 64};
  EXPECT_EQ(param_count(s), 16448u);
  EXPECT_EQ(dense_param_count(64, 64, 3), 17043520u);
  EXPECT_LT(100 * param_count(s), dense_param_count(64, 64, 3));
}

TEST(Init, DeterministicPerSeed) {
  const PolyBlockSpec s{.variant = Variant::kNcp, .order = 3, .rank = 3, .input_dim = 2,
                        .output_dim = 2};
  const auto a = init_params(s, 42);
  const auto b = init_params(s, 42);
  const auto c = init_params(s, 43);
  for (std::size_t i = 0; i < a.tensors.size(); ++i) EXPECT_EQ(a.tensors[i].value, b.tensors[i].value);
  EXPECT_NE(a.get("A1"), c.get("A1"));
  EXPECT_THROW(init_params(s, 1, "uniform"), std::invalid_argument);
}

TEST(Init, ZerosSchemeGivesConstantBeta) {
  const PolyBlockSpec s{.variant = Variant::kCcp, .order = 2, .rank = 2, .input_dim = 3,
                        .output_dim = 2};
  const PolyBlock block{s, init_params(s, 1, InitScheme::kZeros)};
  EXPECT_EQ(forward_block(block, random_tensor({10, 3}, 3)), Tensor::zeros({10, 2}));
}

TEST(Init, DefaultSchemeDoesNotBlowUp) {
  const PolyBlockSpec s{.variant = Variant::kCcp, .order = 4, .rank = 16, .input_dim = 16,
                        .output_dim = 1};
  std::vector<double> outs;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    Tensor z = random_tensor({16}, seed + 5000, -1.0, 1.0);
    z = scale(z, 1.0 / norm(z));
    outs.push_back(forward_block({s, init_params(s, seed)}, z)[0]);
  }
  double mean = 0.0, var = 0.0;
  for (double v : outs) mean += v;
  mean /= outs.size();
  for (double v : outs) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / outs.size());
  EXPECT_GE(sd, 0.01);
  EXPECT_LE(sd, 100.0);
}

TEST(Stabilizer, NoneIsIdentityAndTanhOfZeroIsZero) {
  const Tensor t = random_tensor({3, 4}, 1);
  EXPECT_EQ(apply_stabilizer(t, Stabilizer::kNone), t);
  EXPECT_EQ(apply_stabilizer(Tensor::vector({0}), Stabilizer::kTanh), Tensor::vector({0}));
}

TEST(Stabilizer, TanhMakesBlockNonPolynomial) {
  const PolyBlockSpec s{.variant = Variant::kCcp, .order = 2, .rank = 3, .input_dim = 2,
                        .output_dim = 1, .stabilizer = Stabilizer::kTanh};
  const PolyBlock block{s, init_params(s, 7, InitScheme::kGaussian)};
  EXPECT_FALSE(s.is_polynomial());
  EXPECT_TRUE(oracle::probe_degree(as_function(block), 2, 1, 8).exceeds_max());
  EXPECT_GT(oracle::fit_dense(as_function(block), 2, 1, 2).residual, 1e-6);
}

TEST(Tape, CcpMatchesDirectEvaluationBitExactly) {
  for (Variant v : {Variant::kCcp, Variant::kNcp, Variant::kNcpSkip, Variant::kHighOrderResidual}) {
    for (Stabilizer st : {Stabilizer::kNone, Stabilizer::kTanh, Stabilizer::kInstanceNorm}) {
      const PolyBlockSpec s{.variant = v, .order = 3, .rank = 3, .input_dim = 3, .output_dim = 3,
                            .stabilizer = st, .activation = Activation::kTanh};
      const auto p = init_params(s, 1, InitScheme::kGaussian);
      ad::Graph g;
      const auto out = build_block(g, g.input("z"), s, "blk.");
      ad::Bindings b{{"z", random_tensor({7, 3}, 2)}};
      for (auto& nt : p.tensors) b["blk." + nt.name] = nt.value;
      EXPECT_EQ(g.forward(b, out), forward_block({s, p}, b.at("z"))) << to_string(v);
    }
  }
}

TEST(ProductNet, SingleBlockEqualsBlock) {
  const PolyBlockSpec s{.variant = Variant::kNcpSkip, .order = 2, .rank = 3, .input_dim = 2,
                        .output_dim = 2};
  const PolyBlock block{s, init_params(s, 3, InitScheme::kGaussian)};
  const ProductNet net({block});
  const Tensor z = random_tensor({9, 2}, 4);
  EXPECT_EQ(net.forward(z), forward_block(block, z));
}

TEST(ProductNet, RejectsDimensionMismatch) {
  const PolyBlockSpec a{.variant = Variant::kCcp, .order = 2, .rank = 2, .input_dim = 2,
                        .output_dim = 3};
  const PolyBlockSpec b{.variant = Variant::kCcp, .order = 2, .rank = 2, .input_dim = 2,
                        .output_dim = 1};
  ProductNet net({{a, init_params(a, 1)}});
  EXPECT_THROW(net.append({b, init_params(b, 1)}), std::invalid_argument);
}

TEST(ProductNet, TwoScalarDegreeTwoBlocksComposeToDegreeFour) {
  const PolyBlockSpec s{.variant = Variant::kCcp, .order = 2, .rank = 2, .input_dim = 1,
                        .output_dim = 1};
  const ProductNet net({{s, init_params(s, 1, InitScheme::kGaussian)},
                        {s, init_params(s, 2, InitScheme::kGaussian)}});
  EXPECT_EQ(net.total_degree(), 4u);
  auto f = [&](const Tensor& z) { return net.forward(z); };
  const auto fit = oracle::fit_dense(f, 1, 1, 4);
  EXPECT_LT(fit.residual, 1e-9);
  EXPECT_EQ(fit.poly.effective_degree(1e-8), 4u);
  EXPECT_EQ(oracle::probe_degree(f, 1, 3, 8).degree(), 4u);
}

TEST(ProductNet, ThreeDegreeTwoBlocksGiveDegreeEight) {
  const PolyBlockSpec s{.variant = Variant::kCcp, .order = 2, .rank = 2, .input_dim = 2,
                        .output_dim = 2};
  ProductNet net;
  for (std::uint64_t i = 0; i < 3; ++i) net.append({s, init_params(s, 10 + i, InitScheme::kGaussian)});
  EXPECT_EQ(net.total_degree(), 8u);
  EXPECT_EQ(oracle::probe_degree([&](const Tensor& z) { return net.forward(z); }, 2, 5, 10).degree(),
            8u);
}

TEST(ProductNet, ParametersRoundTrip) {
  const PolyBlockSpec s{.variant = Variant::kNcp, .order = 2, .rank = 2, .input_dim = 2,
                        .output_dim = 2};
  ProductNet net({{s, init_params(s, 1)}, {s, init_params(s, 2)}});
  auto params = net.parameters();
  EXPECT_TRUE(params.count("block0.A1"));
  EXPECT_TRUE(params.count("block1.beta"));
  params["block1.beta"] = Tensor::vector({7, 8});
  net.set_parameters(params);
  EXPECT_EQ(net.blocks()[1].params.get("beta"), Tensor::vector({7, 8}));
  params.erase("block0.A1");
  EXPECT_THROW(net.set_parameters(params), std::invalid_argument);
}

TEST(BiasLike, Names) {
  EXPECT_TRUE(is_bias_like("beta"));
  EXPECT_TRUE(is_bias_like("block2.b13"));
  EXPECT_FALSE(is_bias_like("B1"));
  EXPECT_FALSE(is_bias_like("block0.b"));
  EXPECT_FALSE(is_bias_like("C"));
}

}  // namespace
}  // namespace pinet
