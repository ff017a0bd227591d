#pragma once

// JSON run configurations for the CLI. Parsing is strict: unknown keys and
// out-of-range values throw ConfigError naming the dotted key. to_json emits
// the resolved form (every default spelled out, paths absolute), which parses
// back to an identical configuration.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pinet/blocks.hpp"
#include "pinet/data.hpp"
#include "pinet/train.hpp"
#include "pinet/verify.hpp"

namespace pinet::config {

using nlohmann::json;

/// Environment variable that replaces the working directory as the base for
/// relative output directories.
inline constexpr const char* kOutputRootEnv = "PINET_OUTPUT_ROOT";

struct DataConfig {
  /// "synthetic", "idx" or "csv".
  std::string source = "synthetic";

  // synthetic
  std::string kind = "xor";
  std::size_t samples = 64;
  double jitter = 0.0;
  double inner_radius = 1.0;
  double outer_radius = 2.0;
  std::size_t input_dim = 2;
  std::size_t degree = 2;
  double noise = 0.0;
  /// Monomial -> coefficient for polynomial-regression ("z1^2": 3, "1": 0.5).
  std::map<std::string, double> polynomial{};

  // idx
  std::filesystem::path train_images{};
  std::filesystem::path train_labels{};
  std::filesystem::path test_images{};
  std::filesystem::path test_labels{};
  std::vector<int> classes{};

  // csv
  std::filesystem::path train_file{};
  std::filesystem::path test_file{};
  std::vector<std::string> label_columns{};
  std::optional<std::size_t> num_classes{};

  /// synthetic and single-file csv: train/val/test fractions. A zero test
  /// fraction leaves the test columns of metrics.csv empty.
  std::array<double, 3> split{1.0, 0.0, 0.0};
};

struct BlockConfig {
  PolyBlockSpec spec{};
  InitScheme init = InitScheme::kDefault;
};

/// Bounds checked on the final epoch. Any violated bound fails the run.
struct ExpectConfig {
  std::optional<double> train_accuracy_min{};
  std::optional<double> train_accuracy_max{};
  std::optional<double> test_accuracy_min{};
  std::optional<double> test_accuracy_max{};
  std::optional<double> train_loss_max{};
  std::optional<double> test_loss_max{};
  /// Accuracy recorded when the recipe was tuned, checked to +-pin_tolerance.
  std::optional<double> pinned_test_accuracy{};
  double pin_tolerance = 0.005;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "runs/train";
  DataConfig data{};
  std::vector<BlockConfig> model{};
  train::TrainConfig train{};
  ExpectConfig expect{};
  std::size_t witness_points = 16;
};

struct VerifyConfig {
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "runs/verify";
  bool oracle_grid_enabled = true;
  verify::OracleGridConfig oracle_grid{};
  bool degree_law_enabled = true;
  verify::DegreeLawConfig degree_law{};
  bool grad_check_enabled = true;
  verify::GradCheckSuiteConfig grad_check{};
  std::optional<std::filesystem::path> checkpoint{};
  verify::CheckpointCheckConfig checkpoint_checks{};
};

/// Reads and parses a JSON file. Missing files throw IoError; malformed JSON
/// throws ConfigError with key "<file>".
json load_json(const std::filesystem::path& path);

/// Applies "a.b.c=value" overrides. The value is parsed as JSON when it is
/// valid JSON and taken as a string otherwise.
void apply_overrides(json& doc, const std::vector<std::string>& overrides);

/// Relative paths inside the document resolve against `base_dir`.
RunConfig parse_run_config(const json& doc, const std::filesystem::path& base_dir);
VerifyConfig parse_verify_config(const json& doc, const std::filesystem::path& base_dir);

json to_json(const RunConfig& cfg);
json to_json(const VerifyConfig& cfg);

/// Absolute output directory: absolute paths pass through, relative ones are
/// joined to $PINET_OUTPUT_ROOT when set and to the working directory
/// otherwise.
std::filesystem::path resolve_output_dir(const std::filesystem::path& dir);

/// Builds the datasets a RunConfig describes (test is nullopt when absent).
struct LoadedData {
  data::Dataset train;
  std::optional<data::Dataset> test{};
};
LoadedData load_data(const RunConfig& cfg);

/// Initialises block i with seed cfg.seed + i.
ProductNet build_model(const RunConfig& cfg);

/// The generating polynomial of a polynomial-regression DataConfig, or
/// nullopt when the config asks for a seeded random one.
std::optional<oracle::DensePoly> explicit_polynomial(const DataConfig& cfg);

}  // namespace pinet::config
