#include <gtest/gtest.h>

#include <functional>

#include "pinet/autodiff.hpp"
#include "pinet/error.hpp"
#include "pinet/grad_check.hpp"
#include "test_util.hpp"

namespace pinet {
namespace {

using ad::Graph;
using ad::NodeId;
using testing::random_tensor;

TEST(Forward, HadamardOfInput) {
  Graph g;
  const NodeId x = g.input("x");
  const NodeId y = g.hadamard(x, x);
  EXPECT_EQ(g.forward({{"x", Tensor::vector({2, 3})}}, y), Tensor::vector({4, 9}));
}

TEST(Forward, Constant) {
  Graph g;
  const Tensor c = Tensor::matrix({{1, 2}, {3, 4}});
  const NodeId n = g.constant(c);
  EXPECT_EQ(g.forward({}, n), c);
}

TEST(Forward, UnboundLeafThrows) {
  Graph g;
  const NodeId x = g.input("x");
  const NodeId p = g.parameter("p");
  const NodeId y = g.add(x, p);
  EXPECT_THROW(g.forward({{"x", Tensor::vector({1})}}, y), ad::UnboundLeafError);
}

TEST(Forward, ShapeErrorsPropagate) {
  Graph g;
  const NodeId y = g.add(g.input("a"), g.input("b"));
  EXPECT_THROW(g.forward({{"a", Tensor::vector({1, 2})}, {"b", Tensor::vector({1})}}, y),
               ShapeError);
}

TEST(Backward, SquareGradient) {
  Graph g;
  const NodeId x = g.parameter("x");
  const NodeId loss = g.sum(g.hadamard(x, x));
  g.forward({{"x", Tensor::vector({2, 3})}}, loss);
  EXPECT_EQ(g.backward(loss).at("x"), Tensor::vector({4, 6}));
}

TEST(Backward, LinearGradientIsCoefficient) {
  Graph g;
  const Tensor c = random_tensor({3, 2}, 1);
  const NodeId x = g.parameter("x");
  const NodeId loss = g.sum(g.hadamard(g.constant(c), x));
  g.forward({{"x", random_tensor({3, 2}, 2)}}, loss);
  EXPECT_EQ(g.backward(loss).at("x"), c);
}

TEST(Backward, BeforeForwardThrows) {
  Graph g;
  const NodeId x = g.parameter("x");
  const NodeId loss = g.sum(x);
  EXPECT_THROW(g.backward(loss), ad::GraphStateError);
}

TEST(Backward, NonScalarWithoutSeedThrows) {
  Graph g;
  const NodeId x = g.parameter("x");
  const NodeId y = g.scale(x, 2.0);
  g.forward({{"x", Tensor::vector({1, 2})}}, y);
  EXPECT_THROW(g.backward(y), ad::GraphStateError);
  EXPECT_EQ(g.backward(y, Tensor::vector({1, 1})).at("x"), Tensor::vector({2, 2}));
}

TEST(Backward, UnreachedParameterGetsZeros) {
  Graph g;
  const NodeId x = g.parameter("x");
  const NodeId unused = g.parameter("unused");
  g.scale(unused, 2.0);
  const NodeId loss = g.sum(x);
  g.forward({{"x", Tensor::vector({1})}, {"unused", Tensor::vector({5, 6})}}, loss);
  const auto grads = g.backward(loss);
  EXPECT_EQ(grads.at("unused"), Tensor::vector({0, 0}));
  EXPECT_EQ(grads.by_name.size(), 2u);
}

TEST(Backward, SharedParameterNameAccumulates) {
  Graph g;
  const NodeId a = g.parameter("w");
  const NodeId b = g.parameter("w");
  const NodeId loss = g.sum(g.add(g.scale(a, 2.0), g.scale(b, 3.0)));
  g.forward({{"w", Tensor::vector({1})}}, loss);
  EXPECT_EQ(g.backward(loss).at("w"), Tensor::vector({5}));
}

TEST(Backward, LinearityOfAdjoints) {
  const Tensor xv = random_tensor({4}, 3);
  auto grad_of = [&](const std::function<NodeId(Graph&, NodeId)>& f) {
    Graph g;
    const NodeId x = g.parameter("x");
    const NodeId loss = f(g, x);
    g.forward({{"x", xv}}, loss);
    return g.backward(loss).at("x");
  };
  auto f1 = [](Graph& g, NodeId x) { return g.sum(g.hadamard(x, g.hadamard(x, x))); };
  auto f2 = [](Graph& g, NodeId x) { return g.sum(g.tanh(x)); };
  const Tensor both = grad_of([&](Graph& g, NodeId x) { return g.add(f1(g, x), f2(g, x)); });
  EXPECT_LE(max_abs_diff(both, add(grad_of(f1), grad_of(f2))), 1e-15);
}

TEST(Backward, RepeatedPassesBitIdentical) {
  Graph g;
  const NodeId x = g.parameter("x");
  const NodeId w = g.parameter("w");
  const NodeId loss = g.mean_squared_error(g.tanh(g.matmul(x, w)), g.input("y"));
  const ad::Bindings b = {{"x", random_tensor({5, 3}, 1)},
                          {"w", random_tensor({3, 2}, 2)},
                          {"y", random_tensor({5, 2}, 3)}};
  const double l1 = g.forward(b, loss).item();
  const auto g1 = g.backward(loss);
  const double l2 = g.forward(b, loss).item();
  const auto g2 = g.backward(loss);
  EXPECT_EQ(l1, l2);
  EXPECT_EQ(g1.by_name, g2.by_name);
}

TEST(Backward, InputsReceiveNoGradient) {
  Graph g;
  const NodeId x = g.input("x");
  const NodeId w = g.parameter("w");
  const NodeId loss = g.sum(g.hadamard(x, w));
  g.forward({{"x", Tensor::vector({1, 2})}, {"w", Tensor::vector({3, 4})}}, loss);
  const auto grads = g.backward(loss);
  EXPECT_EQ(grads.by_name.count("x"), 0u);
  EXPECT_EQ(grads.at("w"), Tensor::vector({1, 2}));
}

// Builds loss = sum(weights * op(params...)) and compares the tape gradient
// against central differences.
struct OpCase {
  const char* name;
  std::vector<Shape> shapes;
  std::function<NodeId(Graph&, const std::vector<NodeId>&)> build;
  double lo = -1.0;
  double hi = 1.0;
};

void check_op(const OpCase& c, std::uint64_t seed) {
  ParamMap params;
  for (std::size_t i = 0; i < c.shapes.size(); ++i) {
    params["p" + std::to_string(i)] = random_tensor(c.shapes[i], seed * 31 + i, c.lo, c.hi);
  }
  Graph g;
  std::vector<NodeId> leaves;
  for (std::size_t i = 0; i < c.shapes.size(); ++i) leaves.push_back(g.parameter("p" + std::to_string(i)));
  const NodeId out = c.build(g, leaves);
  const Tensor probe = g.forward(params, out);
  const NodeId weights = g.constant(random_tensor(probe.shape(), seed * 31 + 17));
  const NodeId loss = probe.size() == 1 ? out : g.sum(g.hadamard(out, weights));
  auto value = [&](const ParamMap& p) { return g.forward(p, loss).item(); };
  auto analytic = [&](const ParamMap& p) {
    g.forward(p, loss);
    return g.backward(loss);
  };
  const auto report = grad_check(value, analytic, params);
  EXPECT_TRUE(report.passed()) << c.name << " seed " << seed << " max rel err "
                               << report.max_relative_error();
}

TEST(OpGradients, AllRegisteredOpsMatchFiniteDifferences) {
  const std::vector<OpCase> cases = {
      {"add", {{3, 2}, {3, 2}}, [](Graph& g, auto& p) { return g.add(p[0], p[1]); }},
      {"sub", {{3, 2}, {3, 2}}, [](Graph& g, auto& p) { return g.sub(p[0], p[1]); }},
      {"hadamard", {{3, 2}, {3, 2}}, [](Graph& g, auto& p) { return g.hadamard(p[0], p[1]); }},
      {"scale", {{4}}, [](Graph& g, auto& p) { return g.scale(p[0], -2.5); }},
      {"matmul", {{3, 4}, {4, 2}}, [](Graph& g, auto& p) { return g.matmul(p[0], p[1]); }},
      {"transpose", {{3, 4}}, [](Graph& g, auto& p) { return g.transpose(p[0]); }},
      {"reshape", {{3, 4}}, [](Graph& g, auto& p) { return g.reshape(p[0], {2, 6}); }},
      {"concat0", {{2, 3}, {1, 3}}, [](Graph& g, auto& p) { return g.concat({p[0], p[1]}, 0); }},
      {"concat1", {{2, 3}, {2, 1}}, [](Graph& g, auto& p) { return g.concat({p[0], p[1]}, 1); }},
      {"broadcast_rows", {{3}, {5, 3}},
       [](Graph& g, auto& p) { return g.hadamard(g.broadcast_rows(p[0], p[1]), p[1]); }},
      {"tanh", {{3, 3}}, [](Graph& g, auto& p) { return g.tanh(p[0]); }, -2.0, 2.0},
      {"relu", {{3, 3}}, [](Graph& g, auto& p) { return g.relu(p[0]); }, 0.1, 1.0},
      {"instance_norm", {{3, 5}}, [](Graph& g, auto& p) { return g.instance_norm(p[0], 1e-5); }},
      {"sum", {{3, 2}}, [](Graph& g, auto& p) { return g.sum(p[0]); }},
      {"mse", {{4, 2}, {4, 2}}, [](Graph& g, auto& p) { return g.mean_squared_error(p[0], p[1]); }},
      {"softmax_ce", {{4, 3}}, [](Graph& g, auto& p) {
         return g.softmax_cross_entropy(
             p[0], g.constant(Tensor::matrix({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {0.2, 0.3, 0.5}})));
       }},
  };
  for (const auto& c : cases)
    for (std::uint64_t seed = 1; seed <= 5; ++seed) check_op(c, seed);
}

TEST(OpGradients, HadamardAtExactZeroFollowsProductRule) {
  Graph g;
  const NodeId a = g.parameter("a");
  const NodeId b = g.parameter("b");
  const NodeId loss = g.sum(g.hadamard(a, b));
  g.forward({{"a", Tensor::vector({0, 0})}, {"b", Tensor::vector({3, 0})}}, loss);
  const auto grads = g.backward(loss);
  EXPECT_EQ(grads.at("a"), Tensor::vector({3, 0}));
  EXPECT_EQ(grads.at("b"), Tensor::vector({0, 0}));
}

}  // namespace
}  // namespace pinet
