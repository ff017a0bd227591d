#include "pinet/blocks.hpp"

#include <cmath>
#include <stdexcept>

#include "pinet/error.hpp"
#include "pinet/rng.hpp"

namespace pinet {

namespace {

std::string idx(const char* base, std::size_t n) { return base + std::to_string(n); }

// The block recursions are written once against this small interface and
// instantiated twice: on Tensors for direct evaluation and on tape nodes for
// autodiff. Both instantiations issue the same tensor kernels in the same
// order, which keeps the two routes bit-identical.
struct TensorAlgebra {
  using Value = Tensor;
  const PolyBlockParams& params;

  Tensor param(const std::string& name) { return params.get(name); }
  Tensor matmul(const Tensor& a, const Tensor& b) { return pinet::matmul(a, b); }
  Tensor transpose(const Tensor& a) { return pinet::transpose(a); }
  Tensor add(const Tensor& a, const Tensor& b) { return pinet::add(a, b); }
  Tensor hadamard(const Tensor& a, const Tensor& b) { return pinet::hadamard(a, b); }
  Tensor reshape(const Tensor& a, Shape s) { return pinet::reshape(a, std::move(s)); }
  Tensor broadcast_rows(const Tensor& v, const Tensor& like) {
    return pinet::broadcast_rows(v, like.rows());
  }
  Tensor tanh(const Tensor& a) { return pinet::tanh(a); }
  Tensor relu(const Tensor& a) { return pinet::relu(a); }
  Tensor instance_norm(const Tensor& a) { return pinet::instance_norm(a, kInstanceNormEps); }
};

struct GraphAlgebra {
  using Value = ad::NodeId;
  ad::Graph& g;
  const std::string& prefix;

  ad::NodeId param(const std::string& name) { return g.parameter(prefix + name); }
  ad::NodeId matmul(ad::NodeId a, ad::NodeId b) { return g.matmul(a, b); }
  ad::NodeId transpose(ad::NodeId a) { return g.transpose(a); }
  ad::NodeId add(ad::NodeId a, ad::NodeId b) { return g.add(a, b); }
  ad::NodeId hadamard(ad::NodeId a, ad::NodeId b) { return g.hadamard(a, b); }
  ad::NodeId reshape(ad::NodeId a, Shape s) { return g.reshape(a, std::move(s)); }
  ad::NodeId broadcast_rows(ad::NodeId v, ad::NodeId like) { return g.broadcast_rows(v, like); }
  ad::NodeId tanh(ad::NodeId a) { return g.tanh(a); }
  ad::NodeId relu(ad::NodeId a) { return g.relu(a); }
  ad::NodeId instance_norm(ad::NodeId a) { return g.instance_norm(a, kInstanceNormEps); }
};

template <typename Alg>
typename Alg::Value stabilize(Alg& alg, typename Alg::Value term, Stabilizer mode) {
  switch (mode) {
    case Stabilizer::kNone: return term;
    case Stabilizer::kTanh: return alg.tanh(term);
    case Stabilizer::kInstanceNorm: return alg.instance_norm(term);
  }
  return term;
}

template <typename Alg>
typename Alg::Value activate(Alg& alg, typename Alg::Value x, Activation a) {
  switch (a) {
    case Activation::kNone: return x;
    case Activation::kTanh: return alg.tanh(x);
    case Activation::kRelu: return alg.relu(x);
  }
  return x;
}

// y = x C^T + beta, row-wise C x + beta.
template <typename Alg>
typename Alg::Value output_layer(Alg& alg, typename Alg::Value x) {
  auto cx = alg.matmul(x, alg.transpose(alg.param("C")));
  return alg.add(cx, alg.broadcast_rows(alg.param("beta"), cx));
}

template <typename Alg>
typename Alg::Value ccp_expr(Alg& alg, typename Alg::Value z, const PolyBlockSpec& spec) {
  auto x = alg.matmul(z, alg.param("U1"));
  for (std::size_t n = 2; n <= spec.order; ++n) {
    auto term = alg.hadamard(alg.matmul(z, alg.param(idx("U", n))), x);
    x = alg.add(stabilize(alg, term, spec.stabilizer), x);
  }
  return output_layer(alg, x);
}

template <typename Alg>
typename Alg::Value ncp_expr(Alg& alg, typename Alg::Value z, const PolyBlockSpec& spec,
                             bool skip) {
  const std::size_t k = spec.rank, omega = spec.omega();
  // B_n^T b_n as a length-k vector, repeated over the batch.
  auto bias_term = [&](std::size_t n, typename Alg::Value like) {
    auto row = alg.matmul(alg.reshape(alg.param(idx("b", n)), Shape{1, omega}),
                          alg.param(idx("B", n)));
    return alg.broadcast_rows(alg.reshape(row, Shape{k}), like);
  };
  auto za = alg.matmul(z, alg.param("A1"));
  auto x = alg.hadamard(za, bias_term(1, za));
  for (std::size_t n = 2; n <= spec.order; ++n) {
    auto sx = alg.matmul(x, alg.param(idx("S", n)));
    auto inner = alg.add(sx, bias_term(n, sx));
    auto term = stabilize(alg, alg.hadamard(alg.matmul(z, alg.param(idx("A", n))), inner),
                          spec.stabilizer);
    x = skip ? alg.add(term, x) : term;
  }
  return output_layer(alg, x);
}

template <typename Alg>
typename Alg::Value residual_expr(Alg& alg, typename Alg::Value z, std::size_t order,
                                  Stabilizer stabilizer) {
  auto cz = alg.matmul(z, alg.transpose(alg.param("C")));
  auto y = alg.add(z, cz);
  auto term = cz;
  for (std::size_t j = 2; j <= order; ++j) {
    term = alg.hadamard(term, z);
    y = alg.add(y, stabilize(alg, term, stabilizer));
  }
  return y;
}

template <typename Alg>
typename Alg::Value block_expr(Alg& alg, typename Alg::Value z, const PolyBlockSpec& spec) {
  typename Alg::Value y;
  switch (spec.variant) {
    case Variant::kCcp: y = ccp_expr(alg, z, spec); break;
    case Variant::kNcp: y = ncp_expr(alg, z, spec, false); break;
    case Variant::kNcpSkip: y = ncp_expr(alg, z, spec, true); break;
    case Variant::kHighOrderResidual: y = residual_expr(alg, z, spec.order, spec.stabilizer); break;
  }
  return activate(alg, y, spec.activation);
}

// Runs `f` on z viewed as a batch and restores z's rank.
template <typename F>
Tensor batched(const Tensor& z, std::size_t input_dim, F f) {
  if (z.rank() == 1) {
    if (z.size() != input_dim) {
      throw ShapeError("block input has length " + std::to_string(z.size()) + ", expected " +
                       std::to_string(input_dim));
    }
    Tensor y = f(reshape(z, Shape{1, z.size()}));
    return reshape(y, Shape{y.cols()});
  }
  if (z.rank() != 2 || z.cols() != input_dim) {
    throw ShapeError("block input has shape " + to_string(z.shape()) + ", expected [n x " +
                     std::to_string(input_dim) + "]");
  }
  return f(z);
}

void check_params(const PolyBlockSpec& spec, const PolyBlockParams& params) {
  const auto layout = parameter_layout(spec);
  if (layout.size() != params.tensors.size()) {
    throw ShapeError("block parameters: expected " + std::to_string(layout.size()) +
                     " tensors, got " + std::to_string(params.tensors.size()));
  }
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const auto& t = params.tensors[i];
    if (t.name != layout[i].first || t.value.shape() != layout[i].second) {
      throw ShapeError("block parameter " + std::to_string(i) + ": expected " + layout[i].first +
                       to_string(layout[i].second) + ", got " + t.name + to_string(t.value.shape()));
    }
  }
}

Tensor evaluate(const PolyBlockSpec& spec, const PolyBlockParams& params, const Tensor& z) {
  spec.validate();
  check_params(spec, params);
  return batched(z, spec.input_dim, [&](const Tensor& batch) {
    TensorAlgebra alg{params};
    return block_expr(alg, batch, spec);
  });
}

}  // namespace

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::kCcp: return "ccp";
    case Variant::kNcp: return "ncp";
    case Variant::kNcpSkip: return "ncp-skip";
    case Variant::kHighOrderResidual: return "high-order-residual";
  }
  return "?";
}

std::string_view to_string(Stabilizer s) {
  switch (s) {
    case Stabilizer::kNone: return "none";
    case Stabilizer::kTanh: return "tanh";
    case Stabilizer::kInstanceNorm: return "instance-norm";
  }
  return "?";
}

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::kNone: return "none";
    case Activation::kTanh: return "tanh";
    case Activation::kRelu: return "relu";
  }
  return "?";
}

std::string_view to_string(InitScheme s) {
  switch (s) {
    case InitScheme::kDefault: return "default";
    case InitScheme::kZeros: return "zeros";
    case InitScheme::kBiasOnes: return "bias-ones";
    case InitScheme::kGaussian: return "gaussian";
  }
  return "?";
}

Variant parse_variant(std::string_view name) {
  for (auto v : {Variant::kCcp, Variant::kNcp, Variant::kNcpSkip, Variant::kHighOrderResidual})
    if (name == to_string(v)) return v;
  throw std::invalid_argument("unknown variant '" + std::string(name) + "'");
}

Stabilizer parse_stabilizer(std::string_view name) {
  for (auto s : {Stabilizer::kNone, Stabilizer::kTanh, Stabilizer::kInstanceNorm})
    if (name == to_string(s)) return s;
  throw std::invalid_argument("unknown stabilizer '" + std::string(name) + "'");
}

Activation parse_activation(std::string_view name) {
  for (auto a : {Activation::kNone, Activation::kTanh, Activation::kRelu})
    if (name == to_string(a)) return a;
  throw std::invalid_argument("unknown activation '" + std::string(name) + "'");
}

InitScheme parse_init_scheme(std::string_view name) {
  for (auto s : {InitScheme::kDefault, InitScheme::kZeros, InitScheme::kBiasOnes,
                 InitScheme::kGaussian})
    if (name == to_string(s)) return s;
  throw std::invalid_argument("unknown init scheme '" + std::string(name) + "'");
}

void PolyBlockSpec::validate() const {
  auto positive = [](std::size_t v, const char* field) {
    if (v == 0) throw std::invalid_argument(std::string(field) + " must be >= 1");
  };
  positive(order, "order");
  positive(rank, "rank");
  positive(input_dim, "input_dim");
  positive(output_dim, "output_dim");
  if (variant == Variant::kHighOrderResidual && output_dim != input_dim) {
    throw std::invalid_argument("output_dim must equal input_dim for high-order-residual");
  }
}

const Tensor& PolyBlockParams::get(std::string_view name) const {
  for (const auto& t : tensors)
    if (t.name == name) return t.value;
  throw std::out_of_range("no block parameter '" + std::string(name) + "'");
}

Tensor& PolyBlockParams::get(std::string_view name) {
  for (auto& t : tensors)
    if (t.name == name) return t.value;
  throw std::out_of_range("no block parameter '" + std::string(name) + "'");
}

std::size_t PolyBlockParams::element_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.value.size();
  return n;
}

std::vector<std::pair<std::string, Shape>> parameter_layout(const PolyBlockSpec& spec) {
  spec.validate();
  const std::size_t N = spec.order, d = spec.input_dim, k = spec.rank, o = spec.output_dim;
  std::vector<std::pair<std::string, Shape>> layout;
  switch (spec.variant) {
    case Variant::kCcp:
      for (std::size_t n = 1; n <= N; ++n) layout.emplace_back(idx("U", n), Shape{d, k});
      break;
    case Variant::kNcp:
    case Variant::kNcpSkip: {
      const std::size_t w = spec.omega();
      for (std::size_t n = 1; n <= N; ++n) layout.emplace_back(idx("A", n), Shape{d, k});
      for (std::size_t n = 2; n <= N; ++n) layout.emplace_back(idx("S", n), Shape{k, k});
      for (std::size_t n = 1; n <= N; ++n) layout.emplace_back(idx("B", n), Shape{w, k});
      for (std::size_t n = 1; n <= N; ++n) layout.emplace_back(idx("b", n), Shape{w});
      break;
    }
    case Variant::kHighOrderResidual:
      layout.emplace_back("C", Shape{d, d});
      return layout;
  }
  layout.emplace_back("C", Shape{o, k});
  layout.emplace_back("beta", Shape{o});
  return layout;
}

std::size_t param_count(const PolyBlockSpec& spec) {
  spec.validate();
  const std::size_t N = spec.order, d = spec.input_dim, k = spec.rank, o = spec.output_dim;
  switch (spec.variant) {
    case Variant::kCcp: return N * d * k + o * k + o;
    case Variant::kNcp:
    case Variant::kNcpSkip: {
      const std::size_t w = spec.omega();
      return N * d * k + (N - 1) * k * k + N * w * k + N * w + o * k + o;
    }
    case Variant::kHighOrderResidual: return d * d;
  }
  return 0;
}

std::size_t dense_param_count(std::size_t input_dim, std::size_t output_dim, std::size_t order) {
  std::size_t total = 0, power = 1;
  for (std::size_t n = 1; n <= order; ++n) {
    power *= input_dim;
    total += power;
  }
  return output_dim * total + output_dim;
}

PolyBlockParams init_params(const PolyBlockSpec& spec, std::uint64_t seed, InitScheme scheme) {
  const double factor_std =
      1.0 / std::sqrt(static_cast<double>(spec.variant == Variant::kHighOrderResidual
                                              ? spec.input_dim
                                              : spec.rank));
  Rng rng(seed);
  PolyBlockParams params;
  for (auto& [name, shape] : parameter_layout(spec)) {
    Tensor t(shape);
    const bool bias = is_bias_like(name);
    for (auto& v : t.data()) {
      switch (scheme) {
        case InitScheme::kZeros: v = 0.0; break;
        case InitScheme::kDefault: v = bias ? 0.0 : rng.normal(0.0, factor_std); break;
        case InitScheme::kBiasOnes:
          v = bias ? (name == "beta" ? 0.0 : 1.0) : rng.normal(0.0, factor_std);
          break;
        case InitScheme::kGaussian: v = rng.normal(0.0, bias ? 1.0 : factor_std); break;
      }
    }
    params.tensors.push_back({name, std::move(t)});
  }
  return params;
}

PolyBlockParams init_params(const PolyBlockSpec& spec, std::uint64_t seed,
                            std::string_view scheme) {
  return init_params(spec, seed, parse_init_scheme(scheme));
}

Tensor apply_stabilizer(const Tensor& term, Stabilizer mode) {
  switch (mode) {
    case Stabilizer::kNone: return term;
    case Stabilizer::kTanh: return pinet::tanh(term);
    case Stabilizer::kInstanceNorm:
      if (term.rank() == 1) {
        return reshape(instance_norm(reshape(term, Shape{1, term.size()}), kInstanceNormEps),
                       term.shape());
      }
      return instance_norm(term, kInstanceNormEps);
  }
  return term;
}

Tensor apply_activation(const Tensor& x, Activation a) {
  switch (a) {
    case Activation::kNone: return x;
    case Activation::kTanh: return pinet::tanh(x);
    case Activation::kRelu: return pinet::relu(x);
  }
  return x;
}

Tensor forward_ccp(const PolyBlockSpec& spec, const PolyBlockParams& params, const Tensor& z) {
  if (spec.variant != Variant::kCcp) throw std::invalid_argument("forward_ccp: spec is not CCP");
  return evaluate(spec, params, z);
}

Tensor forward_ncp(const PolyBlockSpec& spec, const PolyBlockParams& params, const Tensor& z) {
  if (spec.variant != Variant::kNcp) throw std::invalid_argument("forward_ncp: spec is not NCP");
  return evaluate(spec, params, z);
}

Tensor forward_ncp_skip(const PolyBlockSpec& spec, const PolyBlockParams& params,
                        const Tensor& z) {
  if (spec.variant != Variant::kNcpSkip) {
    throw std::invalid_argument("forward_ncp_skip: spec is not NCP-Skip");
  }
  return evaluate(spec, params, z);
}

Tensor forward_high_order_residual(const PolyBlockParams& params, const Tensor& z,
                                   std::size_t order, Stabilizer stabilizer) {
  const Tensor& c = params.get("C");
  if (c.rank() != 2 || c.rows() != c.cols()) {
    throw ShapeError("high-order residual: C must be square, got " + to_string(c.shape()));
  }
  PolyBlockSpec spec{.variant = Variant::kHighOrderResidual,
                     .order = order,
                     .input_dim = c.rows(),
                     .output_dim = c.rows(),
                     .stabilizer = stabilizer};
  return evaluate(spec, params, z);
}

Tensor forward_block(const PolyBlock& block, const Tensor& z) {
  return evaluate(block.spec, block.params, z);
}

ad::NodeId build_block(ad::Graph& graph, ad::NodeId z, const PolyBlockSpec& spec,
                       const std::string& prefix) {
  spec.validate();
  GraphAlgebra alg{graph, prefix};
  return block_expr(alg, z, spec);
}

ProductNet::ProductNet(std::vector<PolyBlock> blocks) {
  for (auto& b : blocks) append(std::move(b));
}

void ProductNet::append(PolyBlock block) {
  block.spec.validate();
  check_params(block.spec, block.params);
  if (!blocks_.empty() && blocks_.back().spec.output_dim != block.spec.input_dim) {
    throw std::invalid_argument("block " + std::to_string(blocks_.size()) + " expects input_dim " +
                                std::to_string(block.spec.input_dim) + " but previous block outputs " +
                                std::to_string(blocks_.back().spec.output_dim));
  }
  blocks_.push_back(std::move(block));
}

std::size_t ProductNet::input_dim() const {
  if (blocks_.empty()) throw std::logic_error("empty ProductNet");
  return blocks_.front().spec.input_dim;
}

std::size_t ProductNet::output_dim() const {
  if (blocks_.empty()) throw std::logic_error("empty ProductNet");
  return blocks_.back().spec.output_dim;
}

std::size_t ProductNet::total_degree() const {
  std::size_t degree = 1;
  for (const auto& b : blocks_) degree *= b.spec.degree();
  return degree;
}

bool ProductNet::is_polynomial() const {
  for (const auto& b : blocks_)
    if (!b.spec.is_polynomial()) return false;
  return true;
}

std::size_t ProductNet::param_count() const {
  std::size_t n = 0;
  for (const auto& b : blocks_) n += pinet::param_count(b.spec);
  return n;
}

Tensor ProductNet::forward(const Tensor& z) const {
  if (blocks_.empty()) throw std::logic_error("empty ProductNet");
  Tensor x = z;
  for (const auto& b : blocks_) x = forward_block(b, x);
  return x;
}

ParamMap ProductNet::parameters() const {
  ParamMap out;
  for (std::size_t i = 0; i < blocks_.size(); ++i)
    for (const auto& t : blocks_[i].params.tensors)
      out.emplace("block" + std::to_string(i) + "." + t.name, t.value);
  return out;
}

void ProductNet::set_parameters(const ParamMap& values) {
  std::size_t expected = 0;
  for (auto& b : blocks_) expected += b.params.tensors.size();
  if (values.size() != expected) {
    throw std::invalid_argument("set_parameters: expected " + std::to_string(expected) +
                                " tensors, got " + std::to_string(values.size()));
  }
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    for (auto& t : blocks_[i].params.tensors) {
      const std::string key = "block" + std::to_string(i) + "." + t.name;
      auto it = values.find(key);
      if (it == values.end()) throw std::invalid_argument("set_parameters: missing " + key);
      if (it->second.shape() != t.value.shape()) {
        throw ShapeError("set_parameters: " + key + " has shape " + to_string(it->second.shape()) +
                         ", expected " + to_string(t.value.shape()));
      }
      t.value = it->second;
    }
  }
}

ad::NodeId ProductNet::build(ad::Graph& graph, ad::NodeId z) const {
  ad::NodeId x = z;
  for (std::size_t i = 0; i < blocks_.size(); ++i)
    x = build_block(graph, x, blocks_[i].spec, "block" + std::to_string(i) + ".");
  return x;
}

Tensor forward_product(const ProductNet& net, const Tensor& z) { return net.forward(z); }

bool is_bias_like(std::string_view parameter_name) {
  const auto dot = parameter_name.rfind('.');
  const auto leaf = dot == std::string_view::npos ? parameter_name : parameter_name.substr(dot + 1);
  if (leaf == "beta") return true;
  if (leaf.size() < 2 || leaf[0] != 'b') return false;
  for (std::size_t i = 1; i < leaf.size(); ++i)
    if (leaf[i] < '0' || leaf[i] > '9') return false;
  return true;
}

}  // namespace pinet
