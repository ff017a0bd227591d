#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "pinet/oracle.hpp"
#include "pinet/tensor.hpp"

namespace pinet::data {

/// features: n x d. labels: n x o, one-hot rows for classification or real
/// targets for regression.
struct Dataset {
  Tensor features;
  Tensor labels;
  bool classification = false;
  std::string split = "all";
  std::string provenance;

  std::size_t size() const { return features.rows(); }
  std::size_t input_dim() const { return features.cols(); }
  std::size_t output_dim() const { return labels.cols(); }

  /// Throws std::invalid_argument when row counts differ, a one-hot row
  /// does not sum to 1, or a feature is not finite.
  void validate() const;
};

/// Parses an IDX file. Image stacks (magic 0x00000803, dims n x rows x cols)
/// become an n x (rows*cols) tensor scaled to [0, 1]; label vectors (magic
/// 0x00000801) become a length-n tensor of raw byte values. Errors throw
/// ParseError carrying the byte offset. load_idx also accepts gzipped files.
Tensor load_idx(const std::filesystem::path& path);
Tensor parse_idx(std::span<const std::uint8_t> bytes);

/// Encodes an image stack (n x rows*cols, values in [0, 1], rounded to bytes)
/// or a label vector back into IDX bytes.
std::vector<std::uint8_t> encode_idx_images(const Tensor& images, std::size_t rows,
                                            std::size_t cols);
std::vector<std::uint8_t> encode_idx_labels(const Tensor& labels);

/// Pairs an image file with a label file, keeps the listed classes (all when
/// empty) and one-hot encodes the labels over those classes in the order
/// given.
Dataset load_idx_dataset(const std::filesystem::path& images, const std::filesystem::path& labels,
                         const std::vector<int>& classes);

struct CsvSchema {
  /// Columns holding the targets. Every other column is a feature.
  std::vector<std::string> label_columns;
  /// When set, the single label column holds class indices 0..num_classes-1
  /// and is one-hot encoded.
  std::optional<std::size_t> num_classes{};
};

/// Header-validated numeric CSV. Errors throw ParseError with the 1-based
/// line number (and the column name in the message).
Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema);
Dataset parse_csv(const std::string& text, const CsvSchema& schema);
/// Writes features as x1..xd and labels as y1..yo (or a single `label` class
/// column when classification) with round-trip precision.
std::string format_csv(const Dataset& data);
void write_csv(const std::filesystem::path& path, const Dataset& data);
/// Schema matching format_csv's output for `data`.
CsvSchema csv_schema_for(const Dataset& data);

enum class SyntheticKind { kXor, kCircles, kPolynomialRegression };

SyntheticKind parse_synthetic_kind(const std::string& name);
std::string to_string(SyntheticKind kind);

struct SyntheticParams {
  /// xor / circles: std-dev of Gaussian noise added to each feature.
  double jitter = 0.0;
  /// circles: radius of class 0 and class 1.
  double inner_radius = 1.0;
  double outer_radius = 2.0;
  /// polynomial-regression: input dimension, degree and label noise.
  std::size_t input_dim = 2;
  std::size_t degree = 2;
  double noise = 0.0;
  /// polynomial-regression: explicit generating polynomial (single
  /// output). When absent a seeded one with coefficients in [-1, 1] is drawn.
  std::optional<oracle::DensePoly> polynomial{};
};

/// xor: sample i sits at corner i mod 4 of {-1, 1}^2 with label parity.
/// circles: sample i has class i mod 2 on a circle of that class's radius at
/// a uniform angle. polynomial-regression: uniform inputs on [-1, 1]^d.
Dataset make_synthetic(SyntheticKind kind, std::size_t n, std::uint64_t seed,
                       const SyntheticParams& params = {});

/// The generating polynomial make_synthetic uses for polynomial-regression.
oracle::DensePoly synthetic_polynomial(std::uint64_t seed, const SyntheticParams& params);

struct Splits {
  Dataset train;
  std::optional<Dataset> val;
  std::optional<Dataset> test;
};

/// Seeded permutation split with floor(f_train * n) training rows,
/// floor(f_val * n) validation rows and the rest for test. Empty parts are
/// returned as nullopt. Fractions must be non-negative and sum to 1.
Splits split(const Dataset& data, std::array<double, 3> fractions, std::uint64_t seed);

/// Rows of `data` in the order given.
Dataset subset(const Dataset& data, std::span<const std::size_t> rows);

}  // namespace pinet::data
