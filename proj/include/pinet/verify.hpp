#pragma once

// The invariant battery behind `pinet verify`: oracle equivalence over a grid
// of block shapes, the product degree law, seeded gradient checks, and
// integrity checks on a stored checkpoint.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "pinet/blocks.hpp"

namespace pinet::verify {

struct CaseResult {
  std::string name{};
  bool passed = false;
  /// The measured quantity (residual, error, degree deviation, ...) and its bound.
  double value = 0.0;
  double threshold = 0.0;
  std::string detail{};
};

struct SuiteResult {
  std::string name{};
  std::vector<CaseResult> cases{};
  double seconds = 0.0;

  bool passed() const;
  std::size_t failures() const;
  /// Largest `value` over the cases; 0 for an empty suite.
  double worst_value() const;
};

struct OracleGridConfig {
  std::vector<Variant> variants = {Variant::kCcp, Variant::kNcp, Variant::kNcpSkip,
                                   Variant::kHighOrderResidual};
  std::vector<std::size_t> input_dims = {1, 2, 3};
  std::vector<std::size_t> ranks = {1, 2, 4};
  std::vector<std::size_t> output_dims = {1, 2};
  std::vector<std::size_t> bias_dims = {1, 2};
  std::vector<std::size_t> orders = {1, 2, 3};
  std::size_t seeds = 5;
  std::size_t holdout_points = 200;
  double tolerance = 1e-9;
};

/// Every distinct block in the grid (CCP ignores omega; HighOrderResidual
/// ignores k, o and omega), fitted by the dense oracle for each seed. A case
/// passes when the fit residual is below tolerance and
/// |recursion - dense| <= tolerance * (1 + |dense|) on fresh held-out points.
SuiteResult oracle_grid(const OracleGridConfig& cfg, std::uint64_t seed);

struct DegreeLawConfig {
  std::size_t max_blocks = 3;
  std::vector<std::size_t> block_degrees = {1, 2, 3};
  std::size_t max_total_degree = 8;
  std::size_t seeds = 5;
};

/// Chains of 1..max_blocks random stabilizer-free blocks with the listed
/// degrees; the probed degree must equal the product of block degrees.
SuiteResult degree_law(const DegreeLawConfig& cfg, std::uint64_t seed);

struct GradCheckSuiteConfig {
  std::size_t instances = 100;
  double step = 1e-6;
  double tolerance = 1e-5;
  double absolute_floor = 1e-8;
};

/// Seeded random (variant, shape, stabilizer, loss) instances, including
/// two-block products, checked against central differences.
SuiteResult grad_checks(const GradCheckSuiteConfig& cfg, std::uint64_t seed);

struct CheckpointCheckConfig {
  double witness_tolerance = 1e-12;
  double fit_tolerance = 1e-9;
  std::size_t max_basis = 5000;
};

/// Checksum, decode, witness re-evaluation and, for polynomial networks,
/// degree and oracle-fit checks. A checkpoint that fails to decode yields a
/// failing case rather than an exception; unreadable files throw IoError.
SuiteResult checkpoint_checks(const std::filesystem::path& path, const CheckpointCheckConfig& cfg,
                              std::uint64_t seed);

/// A ProductNet as a batch function for the oracle.
std::function<Tensor(const Tensor&)> as_function(const ProductNet& net);

}  // namespace pinet::verify
