#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "pinet/tensor.hpp"

namespace pinet::ad {

/// Handle to a node of a Graph. Only meaningful for the graph that issued it.
struct NodeId {
  std::uint32_t index = 0;
  friend bool operator==(NodeId, NodeId) = default;
};

enum class Op : std::uint8_t {
  kInput,
  kParameter,
  kConstant,
  kAdd,
  kSub,
  kHadamard,
  kScale,
  kMatmul,
  kTranspose,
  kReshape,
  kConcat,
  kBroadcastRows,
  kTanh,
  kRelu,
  kInstanceNorm,
  kSum,
  kMeanSquaredError,
  kSoftmaxCrossEntropy,
};

const char* op_name(Op op);

/// Values for the named input and parameter leaves of a graph.
using Bindings = std::map<std::string, Tensor>;

/// Gradient of a scalar with respect to each parameter leaf, keyed by name.
struct Gradients {
  std::map<std::string, Tensor> by_name;

  const Tensor& at(const std::string& name) const;
  double global_norm() const;
};

class UnboundLeafError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class GraphStateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Reverse-mode tape.
///
/// Nodes are appended by the builder methods and therefore stored in a
/// topological order. forward() evaluates every node up to the requested
/// output and caches the values; backward() walks the cached tape in reverse
/// and accumulates adjoints. A graph is built once and re-evaluated with new
/// bindings, e.g. once per minibatch.
class Graph {
 public:
  NodeId input(std::string name);
  NodeId parameter(std::string name);
  NodeId constant(Tensor value);

  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId hadamard(NodeId a, NodeId b);
  NodeId scale(NodeId a, double s);
  NodeId matmul(NodeId a, NodeId b);
  NodeId transpose(NodeId a);
  NodeId reshape(NodeId a, Shape shape);
  NodeId concat(std::vector<NodeId> parts, std::size_t axis = 0);
  /// Repeats vector `v` once per row of `like` (the batch broadcast).
  NodeId broadcast_rows(NodeId v, NodeId like);
  NodeId tanh(NodeId a);
  NodeId relu(NodeId a);
  NodeId instance_norm(NodeId a, double eps);
  NodeId sum(NodeId a);
  /// mean over all elements of (prediction - target)^2.
  NodeId mean_squared_error(NodeId prediction, NodeId target);
  /// mean over rows of -sum_j target_j * log softmax(logits)_j.
  NodeId softmax_cross_entropy(NodeId logits, NodeId target);

  const Tensor& forward(const Bindings& bindings, NodeId output);
  /// Scalar output only; seeds the adjoint with 1.
  Gradients backward(NodeId output);
  Gradients backward(NodeId output, const Tensor& seed);

  const Tensor& value(NodeId id) const;
  std::size_t size() const noexcept { return nodes_.size(); }
  std::vector<std::string> parameter_names() const;

 private:
  struct Node {
    Op op = Op::kInput;
    std::vector<NodeId> inputs{};
    std::string name{};  // leaves
    Tensor constant{};   // kConstant
    Shape shape{};       // kReshape
    double scalar = 0.0;  // kScale factor, kInstanceNorm eps
    std::size_t axis = 0;  // kConcat
    bool needs_grad = false;
  };

  NodeId push(Node node);
  void check(NodeId id) const;
  void evaluate(std::size_t i, const Bindings& bindings);
  void propagate(std::size_t i, const Tensor& grad);
  void accumulate(NodeId target, Tensor grad);

  std::vector<Node> nodes_;
  std::vector<Tensor> values_;
  std::vector<Tensor> adjoints_;
  std::vector<bool> has_adjoint_;
  std::size_t evaluated_ = 0;  // nodes [0, evaluated_) hold current values
};

}  // namespace pinet::ad
