#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "pinet/autodiff.hpp"
#include "pinet/grad_check.hpp"
#include "pinet/tensor.hpp"

namespace pinet {

/// Recursive polynomial block families.
///
///   CCP       x_1 = U_1^T z,  x_n = (U_n^T z) * x_{n-1} + x_{n-1}
///   NCP       x_1 = (A_1^T z) * (B_1^T b_1),
///             x_n = (A_n^T z) * (S_n^T x_{n-1} + B_n^T b_n)
///   NCP-Skip  NCP with + x_{n-1} added at every n >= 2
///
/// and the output layer y = C x_N + beta. `*` is the Hadamard product.
/// HighOrderResidual is the activation-free residual unit of order i:
///   y = z + Cz + (Cz)*z + (Cz)*z*z + ...   (i - 1 Hadamard terms)
enum class Variant : std::uint8_t { kCcp = 0, kNcp = 1, kNcpSkip = 2, kHighOrderResidual = 3 };

/// Magnitude control on the order >= 2 terms. Any mode other than kNone
/// makes the block non-polynomial.
enum class Stabilizer : std::uint8_t { kNone = 0, kTanh = 1, kInstanceNorm = 2 };

/// Optional elementwise nonlinearity applied to a block's output.
enum class Activation : std::uint8_t { kNone = 0, kTanh = 1, kRelu = 2 };

inline constexpr double kInstanceNormEps = 1e-5;

std::string_view to_string(Variant v);
std::string_view to_string(Stabilizer s);
std::string_view to_string(Activation a);
/// Parsers accept the to_string spellings; unknown names throw std::invalid_argument.
Variant parse_variant(std::string_view name);
Stabilizer parse_stabilizer(std::string_view name);
Activation parse_activation(std::string_view name);

struct PolyBlockSpec {
  Variant variant = Variant::kCcp;
  std::size_t order = 2;       // N, or i for HighOrderResidual
  std::size_t rank = 1;        // k, shared by every order
  std::size_t input_dim = 1;   // d
  std::size_t output_dim = 1;  // o; must equal d for HighOrderResidual
  std::size_t bias_dim = 0;    // omega (NCP family); 0 selects omega = k
  Stabilizer stabilizer = Stabilizer::kNone;
  Activation activation = Activation::kNone;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
  std::size_t omega() const { return bias_dim == 0 ? rank : bias_dim; }
  bool is_polynomial() const {
    return stabilizer == Stabilizer::kNone && activation == Activation::kNone;
  }
  std::size_t degree() const { return order; }
  bool operator==(const PolyBlockSpec&) const = default;
};

struct NamedTensor {
  std::string name;
  Tensor value;
};

/// Learnable tensors of one block, in canonical order:
///   CCP                U1..UN (d x k), C (o x k), beta (o)
///   NCP, NCP-Skip      A1..AN (d x k), S2..SN (k x k), B1..BN (omega x k),
///                      b1..bN (omega), C (o x k), beta (o)
///   HighOrderResidual  C (d x d)
struct PolyBlockParams {
  std::vector<NamedTensor> tensors;

  const Tensor& get(std::string_view name) const;
  Tensor& get(std::string_view name);
  std::size_t element_count() const;
};

/// Canonical (name, shape) list for a spec.
std::vector<std::pair<std::string, Shape>> parameter_layout(const PolyBlockSpec& spec);

/// Closed-form parameter count:
///   CCP          N d k + o k + o
///   NCP(-Skip)   N d k + (N-1) k^2 + N omega k + N omega + o k + o
///   HOR          d^2
std::size_t param_count(const PolyBlockSpec& spec);
/// Unfactorised polynomial of order N: o * sum_{n=1..N} d^n + o.
std::size_t dense_param_count(std::size_t input_dim, std::size_t output_dim, std::size_t order);

/// kDefault: factor matrices i.i.d. N(0, 1/k) (N(0, 1/d) for the residual
/// block's C), beta and b_n zero. With b_n = 0 an NCP block starts out
/// constant, so kBiasOnes (b_n = 1) is the recommended scheme for training
/// NCP variants. kGaussian also draws beta and b_n from N(0, 1), which is
/// what the verification battery uses to get generic polynomials.
enum class InitScheme : std::uint8_t { kDefault, kZeros, kBiasOnes, kGaussian };

std::string_view to_string(InitScheme s);
InitScheme parse_init_scheme(std::string_view name);

PolyBlockParams init_params(const PolyBlockSpec& spec, std::uint64_t seed,
                            InitScheme scheme = InitScheme::kDefault);
PolyBlockParams init_params(const PolyBlockSpec& spec, std::uint64_t seed,
                            std::string_view scheme);

Tensor apply_stabilizer(const Tensor& term, Stabilizer mode);
Tensor apply_activation(const Tensor& x, Activation a);

// Direct evaluation. `z` is either a single input (rank 1, length d) or a
// batch (rank 2, one sample per row); the result has the matching rank.
Tensor forward_ccp(const PolyBlockSpec& spec, const PolyBlockParams& params, const Tensor& z);
Tensor forward_ncp(const PolyBlockSpec& spec, const PolyBlockParams& params, const Tensor& z);
Tensor forward_ncp_skip(const PolyBlockSpec& spec, const PolyBlockParams& params,
                        const Tensor& z);
Tensor forward_high_order_residual(const PolyBlockParams& params, const Tensor& z,
                                   std::size_t order, Stabilizer stabilizer = Stabilizer::kNone);

struct PolyBlock {
  PolyBlockSpec spec;
  PolyBlockParams params;
};

/// Dispatches on the variant and applies the block's activation.
Tensor forward_block(const PolyBlock& block, const Tensor& z);

/// Emits the block onto a tape. Parameters become graph parameters named
/// prefix + tensor name.
ad::NodeId build_block(ad::Graph& graph, ad::NodeId z, const PolyBlockSpec& spec,
                       const std::string& prefix);

/// Chain of blocks where the output of block i feeds block i + 1, so the
/// realised degree is the product of the block degrees.
class ProductNet {
 public:
  ProductNet() = default;
  explicit ProductNet(std::vector<PolyBlock> blocks);

  /// Throws std::invalid_argument if the block's input_dim does not match.
  void append(PolyBlock block);

  const std::vector<PolyBlock>& blocks() const noexcept { return blocks_; }
  bool empty() const noexcept { return blocks_.empty(); }
  std::size_t input_dim() const;
  std::size_t output_dim() const;
  std::size_t total_degree() const;
  bool is_polynomial() const;
  std::size_t param_count() const;

  Tensor forward(const Tensor& z) const;

  /// Parameters keyed "block<i>.<name>".
  ParamMap parameters() const;
  /// Replaces every parameter; names and shapes must match parameters().
  void set_parameters(const ParamMap& values);

  ad::NodeId build(ad::Graph& graph, ad::NodeId z) const;

 private:
  std::vector<PolyBlock> blocks_;
};

Tensor forward_product(const ProductNet& net, const Tensor& z);

/// True for beta and b_n tensors, which are exempt from weight decay.
bool is_bias_like(std::string_view parameter_name);

}  // namespace pinet
