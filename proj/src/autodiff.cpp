#include "pinet/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "pinet/error.hpp"

namespace pinet::ad {

const char* op_name(Op op) {
  switch (op) {
    case Op::kInput: return "input";
    case Op::kParameter: return "parameter";
    case Op::kConstant: return "constant";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kHadamard: return "hadamard";
    case Op::kScale: return "scale";
    case Op::kMatmul: return "matmul";
    case Op::kTranspose: return "transpose";
    case Op::kReshape: return "reshape";
    case Op::kConcat: return "concat";
    case Op::kBroadcastRows: return "broadcast_rows";
    case Op::kTanh: return "tanh";
    case Op::kRelu: return "relu";
    case Op::kInstanceNorm: return "instance_norm";
    case Op::kSum: return "sum";
    case Op::kMeanSquaredError: return "mean_squared_error";
    case Op::kSoftmaxCrossEntropy: return "softmax_cross_entropy";
  }
  return "?";
}

const Tensor& Gradients::at(const std::string& name) const {
  auto it = by_name.find(name);
  if (it == by_name.end()) throw std::out_of_range("no gradient for '" + name + "'");
  return it->second;
}

double Gradients::global_norm() const {
  double s = 0.0;
  for (const auto& [name, g] : by_name) s += dot(g, g);
  return std::sqrt(s);
}

NodeId Graph::push(Node node) {
  for (auto in : node.inputs) {
    check(in);
    node.needs_grad = node.needs_grad || nodes_[in.index].needs_grad;
  }
  nodes_.push_back(std::move(node));
  evaluated_ = std::min(evaluated_, nodes_.size() - 1);
  return NodeId{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

void Graph::check(NodeId id) const {
  if (id.index >= nodes_.size()) throw std::out_of_range("node id not issued by this graph");
}

NodeId Graph::input(std::string name) {
  return push(Node{.op = Op::kInput, .name = std::move(name)});
}

NodeId Graph::parameter(std::string name) {
  return push(Node{.op = Op::kParameter, .name = std::move(name), .needs_grad = true});
}

NodeId Graph::constant(Tensor value) {
  return push(Node{.op = Op::kConstant, .constant = std::move(value)});
}

NodeId Graph::add(NodeId a, NodeId b) { return push(Node{.op = Op::kAdd, .inputs = {a, b}}); }
NodeId Graph::sub(NodeId a, NodeId b) { return push(Node{.op = Op::kSub, .inputs = {a, b}}); }
NodeId Graph::hadamard(NodeId a, NodeId b) {
  return push(Node{.op = Op::kHadamard, .inputs = {a, b}});
}
NodeId Graph::scale(NodeId a, double s) {
  return push(Node{.op = Op::kScale, .inputs = {a}, .scalar = s});
}
NodeId Graph::matmul(NodeId a, NodeId b) {
  return push(Node{.op = Op::kMatmul, .inputs = {a, b}});
}
NodeId Graph::transpose(NodeId a) { return push(Node{.op = Op::kTranspose, .inputs = {a}}); }
NodeId Graph::reshape(NodeId a, Shape shape) {
  return push(Node{.op = Op::kReshape, .inputs = {a}, .shape = std::move(shape)});
}
NodeId Graph::concat(std::vector<NodeId> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no operands");
  return push(Node{.op = Op::kConcat, .inputs = std::move(parts), .axis = axis});
}
NodeId Graph::broadcast_rows(NodeId v, NodeId like) {
  return push(Node{.op = Op::kBroadcastRows, .inputs = {v, like}});
}
NodeId Graph::tanh(NodeId a) { return push(Node{.op = Op::kTanh, .inputs = {a}}); }
NodeId Graph::relu(NodeId a) { return push(Node{.op = Op::kRelu, .inputs = {a}}); }
NodeId Graph::instance_norm(NodeId a, double eps) {
  return push(Node{.op = Op::kInstanceNorm, .inputs = {a}, .scalar = eps});
}
NodeId Graph::sum(NodeId a) { return push(Node{.op = Op::kSum, .inputs = {a}}); }
NodeId Graph::mean_squared_error(NodeId prediction, NodeId target) {
  return push(Node{.op = Op::kMeanSquaredError, .inputs = {prediction, target}});
}
NodeId Graph::softmax_cross_entropy(NodeId logits, NodeId target) {
  return push(Node{.op = Op::kSoftmaxCrossEntropy, .inputs = {logits, target}});
}

std::vector<std::string> Graph::parameter_names() const {
  std::vector<std::string> names;
  for (const auto& n : nodes_)
    if (n.op == Op::kParameter) names.push_back(n.name);
  return names;
}

const Tensor& Graph::value(NodeId id) const {
  check(id);
  if (id.index >= evaluated_) throw GraphStateError("value requested before forward");
  return values_[id.index];
}

namespace {

// Row-wise log-softmax of a rank-2 tensor.
Tensor log_softmax_rows(const Tensor& logits) {
  if (logits.rank() != 2) throw ShapeError("softmax_cross_entropy: logits must be rank 2");
  Tensor out(logits.shape());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    double m = logits(i, 0);
    for (std::size_t j = 1; j < logits.cols(); ++j) m = std::max(m, logits(i, j));
    double s = 0.0;
    for (std::size_t j = 0; j < logits.cols(); ++j) s += std::exp(logits(i, j) - m);
    const double lse = m + std::log(s);
    for (std::size_t j = 0; j < logits.cols(); ++j) out(i, j) = logits(i, j) - lse;
  }
  return out;
}

}  // namespace

void Graph::evaluate(std::size_t i, const Bindings& bindings) {
  const Node& n = nodes_[i];
  auto in = [&](std::size_t k) -> const Tensor& { return values_[n.inputs[k].index]; };
  Tensor& out = values_[i];
  switch (n.op) {
    case Op::kInput:
    case Op::kParameter: {
      auto it = bindings.find(n.name);
      if (it == bindings.end()) {
        throw UnboundLeafError(std::string(op_name(n.op)) + " '" + n.name + "' is not bound");
      }
      out = it->second;
      break;
    }
    case Op::kConstant: out = n.constant; break;
    case Op::kAdd: out = pinet::add(in(0), in(1)); break;
    case Op::kSub: out = pinet::sub(in(0), in(1)); break;
    case Op::kHadamard: out = pinet::hadamard(in(0), in(1)); break;
    case Op::kScale: out = pinet::scale(in(0), n.scalar); break;
    case Op::kMatmul: out = pinet::matmul(in(0), in(1)); break;
    case Op::kTranspose: out = pinet::transpose(in(0)); break;
    case Op::kReshape: out = pinet::reshape(in(0), n.shape); break;
    case Op::kConcat: {
      std::vector<Tensor> parts;
      for (std::size_t k = 0; k < n.inputs.size(); ++k) parts.push_back(in(k));
      out = pinet::concat(parts, n.axis);
      break;
    }
    case Op::kBroadcastRows: out = pinet::broadcast_rows(in(0), in(1).extent(0)); break;
    case Op::kTanh: out = pinet::tanh(in(0)); break;
    case Op::kRelu: out = pinet::relu(in(0)); break;
    case Op::kInstanceNorm: out = pinet::instance_norm(in(0), n.scalar); break;
    case Op::kSum: out = Tensor::scalar(pinet::sum(in(0))); break;
    case Op::kMeanSquaredError: {
      const Tensor diff = pinet::sub(in(0), in(1));
      out = Tensor::scalar(pinet::dot(diff, diff) / static_cast<double>(diff.size()));
      break;
    }
    case Op::kSoftmaxCrossEntropy: {
      if (in(0).shape() != in(1).shape()) {
        throw ShapeError("softmax_cross_entropy: logits " + to_string(in(0).shape()) +
                         " vs target " + to_string(in(1).shape()));
      }
      const Tensor logp = log_softmax_rows(in(0));
      out = Tensor::scalar(-pinet::dot(logp, in(1)) / static_cast<double>(logp.rows()));
      break;
    }
  }
}

const Tensor& Graph::forward(const Bindings& bindings, NodeId output) {
  check(output);
  values_.resize(nodes_.size());
  evaluated_ = 0;
  for (std::size_t i = 0; i <= output.index; ++i) {
    evaluate(i, bindings);
    evaluated_ = i + 1;
  }
  return values_[output.index];
}

void Graph::accumulate(NodeId target, Tensor grad) {
  const auto t = target.index;
  if (!nodes_[t].needs_grad) return;
  if (has_adjoint_[t]) {
    adjoints_[t] = pinet::add(adjoints_[t], grad);
  } else {
    adjoints_[t] = std::move(grad);
    has_adjoint_[t] = true;
  }
}

void Graph::propagate(std::size_t i, const Tensor& g) {
  const Node& n = nodes_[i];
  auto in = [&](std::size_t k) -> const Tensor& { return values_[n.inputs[k].index]; };
  auto wants = [&](std::size_t k) { return nodes_[n.inputs[k].index].needs_grad; };
  switch (n.op) {
    case Op::kInput:
    case Op::kParameter:
    case Op::kConstant:
      break;
    case Op::kAdd:
      accumulate(n.inputs[0], g);
      accumulate(n.inputs[1], g);
      break;
    case Op::kSub:
      accumulate(n.inputs[0], g);
      if (wants(1)) accumulate(n.inputs[1], pinet::scale(g, -1.0));
      break;
    case Op::kHadamard:
      if (wants(0)) accumulate(n.inputs[0], pinet::hadamard(g, in(1)));
      if (wants(1)) accumulate(n.inputs[1], pinet::hadamard(g, in(0)));
      break;
    case Op::kScale: accumulate(n.inputs[0], pinet::scale(g, n.scalar)); break;
    case Op::kMatmul:
      if (wants(0)) accumulate(n.inputs[0], pinet::matmul(g, pinet::transpose(in(1))));
      if (wants(1)) accumulate(n.inputs[1], pinet::matmul(pinet::transpose(in(0)), g));
      break;
    case Op::kTranspose: accumulate(n.inputs[0], pinet::transpose(g)); break;
    case Op::kReshape: accumulate(n.inputs[0], pinet::reshape(g, in(0).shape())); break;
    case Op::kConcat: {
      // Split g back along the concat axis.
      const Shape& full = g.shape();
      std::size_t outer = 1, inner = 1;
      for (std::size_t a = 0; a < n.axis; ++a) outer *= full[a];
      for (std::size_t a = n.axis + 1; a < full.size(); ++a) inner *= full[a];
      std::size_t offset = 0;
      const std::size_t row = full[n.axis] * inner;
      for (std::size_t k = 0; k < n.inputs.size(); ++k) {
        const std::size_t chunk = in(k).shape()[n.axis] * inner;
        if (wants(k)) {
          std::vector<double> part;
          part.reserve(outer * chunk);
          for (std::size_t o = 0; o < outer; ++o) {
            auto first = g.values().begin() + static_cast<std::ptrdiff_t>(o * row + offset);
            part.insert(part.end(), first, first + static_cast<std::ptrdiff_t>(chunk));
          }
          accumulate(n.inputs[k], Tensor(in(k).shape(), std::move(part)));
        }
        offset += chunk;
      }
      break;
    }
    case Op::kBroadcastRows:
      accumulate(n.inputs[0], pinet::reshape(pinet::sum_rows(g), in(0).shape()));
      break;
    case Op::kTanh: {
      Tensor d(g.shape());
      const Tensor& y = values_[i];
      for (std::size_t e = 0; e < d.size(); ++e) d[e] = g[e] * (1.0 - y[e] * y[e]);
      accumulate(n.inputs[0], std::move(d));
      break;
    }
    case Op::kRelu: {
      Tensor d(g.shape());
      for (std::size_t e = 0; e < d.size(); ++e) d[e] = in(0)[e] > 0.0 ? g[e] : 0.0;
      accumulate(n.inputs[0], std::move(d));
      break;
    }
    case Op::kInstanceNorm: {
      // dx = (g - mean(g) - xhat * mean(g * xhat)) / sigma, row by row.
      const Tensor& x = in(0);
      const Tensor& xhat = values_[i];
      const std::size_t m = x.rows(), c = x.cols();
      Tensor d(x.shape());
      for (std::size_t r = 0; r < m; ++r) {
        double mean = 0.0;
        for (std::size_t j = 0; j < c; ++j) mean += x(r, j);
        mean /= static_cast<double>(c);
        double var = 0.0;
        for (std::size_t j = 0; j < c; ++j) var += (x(r, j) - mean) * (x(r, j) - mean);
        var /= static_cast<double>(c);
        const double inv = 1.0 / std::sqrt(var + n.scalar);
        double gmean = 0.0, gxmean = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
          gmean += g(r, j);
          gxmean += g(r, j) * xhat(r, j);
        }
        gmean /= static_cast<double>(c);
        gxmean /= static_cast<double>(c);
        for (std::size_t j = 0; j < c; ++j) d(r, j) = (g(r, j) - gmean - xhat(r, j) * gxmean) * inv;
      }
      accumulate(n.inputs[0], std::move(d));
      break;
    }
    case Op::kSum: accumulate(n.inputs[0], Tensor(in(0).shape(), g.item())); break;
    case Op::kMeanSquaredError: {
      const Tensor diff = pinet::sub(in(0), in(1));
      const Tensor d = pinet::scale(diff, 2.0 * g.item() / static_cast<double>(diff.size()));
      if (wants(0)) accumulate(n.inputs[0], d);
      if (wants(1)) accumulate(n.inputs[1], pinet::scale(d, -1.0));
      break;
    }
    case Op::kSoftmaxCrossEntropy: {
      const Tensor logp = log_softmax_rows(in(0));
      const Tensor& target = in(1);
      const double w = g.item() / static_cast<double>(logp.rows());
      if (wants(0)) {
        // d/dlogits = softmax * sum(target) - target, per row.
        Tensor d(logp.shape());
        for (std::size_t r = 0; r < logp.rows(); ++r) {
          double mass = 0.0;
          for (std::size_t j = 0; j < logp.cols(); ++j) mass += target(r, j);
          for (std::size_t j = 0; j < logp.cols(); ++j)
            d(r, j) = (std::exp(logp(r, j)) * mass - target(r, j)) * w;
        }
        accumulate(n.inputs[0], std::move(d));
      }
      if (wants(1)) accumulate(n.inputs[1], pinet::scale(logp, -w));
      break;
    }
  }
}

Gradients Graph::backward(NodeId output) {
  check(output);
  if (output.index >= evaluated_) throw GraphStateError("backward called before forward");
  if (values_[output.index].size() != 1) {
    throw GraphStateError("backward: output has shape " + to_string(values_[output.index].shape()) +
                          "; a non-scalar output needs an explicit seed");
  }
  return backward(output, Tensor(values_[output.index].shape(), 1.0));
}

Gradients Graph::backward(NodeId output, const Tensor& seed) {
  check(output);
  if (output.index >= evaluated_) throw GraphStateError("backward called before forward");
  if (seed.shape() != values_[output.index].shape()) {
    throw ShapeError("backward: seed shape " + to_string(seed.shape()) + " differs from output " +
                     to_string(values_[output.index].shape()));
  }
  adjoints_.assign(nodes_.size(), Tensor());
  has_adjoint_.assign(nodes_.size(), false);
  accumulate(output, seed);
  for (std::size_t i = output.index + 1; i-- > 0;) {
    if (has_adjoint_[i]) propagate(i, adjoints_[i]);
  }
  Gradients grads;
  for (std::size_t i = 0; i <= output.index; ++i) {
    const Node& n = nodes_[i];
    if (n.op != Op::kParameter) continue;
    Tensor g = has_adjoint_[i] ? adjoints_[i] : zeros_like(values_[i]);
    auto [it, inserted] = grads.by_name.emplace(n.name, g);
    if (!inserted) it->second = pinet::add(it->second, g);
  }
  return grads;
}

}  // namespace pinet::ad
