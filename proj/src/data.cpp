#include "pinet/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>
#include <sstream>

#include "pinet/error.hpp"
#include "pinet/io.hpp"
#include "pinet/rng.hpp"

namespace pinet::data {

namespace {

constexpr std::uint32_t kIdxLabels = 0x00000801;
constexpr std::uint32_t kIdxImages = 0x00000803;
constexpr std::uint64_t kIdxMaxElements = std::uint64_t{1} << 32;

std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  if (bytes.size() < offset + 4) throw ParseError("IDX header truncated", bytes.size());
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> split_row(const std::string& line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    cells.push_back(trim(std::string_view(line).substr(start, comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return cells;
}

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

Tensor one_hot(std::span<const std::size_t> classes, std::size_t num_classes) {
  Tensor t(Shape{classes.size(), num_classes});
  for (std::size_t i = 0; i < classes.size(); ++i) t(i, classes[i]) = 1.0;
  return t;
}

}  // namespace

void Dataset::validate() const {
  if (features.rank() != 2 || labels.rank() != 2) {
    throw std::invalid_argument("dataset: features and labels must be rank 2");
  }
  if (features.rows() != labels.rows()) {
    throw std::invalid_argument("dataset: " + std::to_string(features.rows()) + " feature rows vs " +
                                std::to_string(labels.rows()) + " label rows");
  }
  if (!all_finite(features)) throw std::invalid_argument("dataset: non-finite feature value");
  if (classification) {
    for (std::size_t i = 0; i < labels.rows(); ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < labels.cols(); ++j) s += labels(i, j);
      if (std::abs(s - 1.0) > 1e-12) {
        throw std::invalid_argument("dataset: label row " + std::to_string(i) + " is not one-hot");
      }
    }
  }
}

Tensor parse_idx(std::span<const std::uint8_t> bytes) {
  const std::uint32_t magic = read_be32(bytes, 0);
  if (magic != kIdxLabels && magic != kIdxImages) {
    std::ostringstream os;
    os << "bad IDX magic 0x" << std::hex << magic;
    throw ParseError(os.str(), 0);
  }
  const std::size_t ndims = magic & 0xff;
  std::vector<std::uint64_t> dims(ndims);
  std::uint64_t count = 1;
  for (std::size_t i = 0; i < ndims; ++i) {
    dims[i] = read_be32(bytes, 4 + 4 * i);
    if (dims[i] == 0) throw ParseError("IDX dimension " + std::to_string(i) + " is zero", 4 + 4 * i);
    count *= dims[i];
    if (count > kIdxMaxElements) throw ParseError("IDX dimension overflow", 4 + 4 * i);
  }
  const std::size_t payload = 4 + 4 * ndims;
  if (bytes.size() < payload + count) {
    throw ParseError("IDX payload truncated: expected " + std::to_string(count) + " bytes, found " +
                         std::to_string(bytes.size() - payload),
                     bytes.size());
  }
  if (bytes.size() > payload + count) {
    throw ParseError("IDX file has trailing bytes", payload + count);
  }
  const auto body = bytes.subspan(payload, count);
  if (magic == kIdxLabels) {
    std::vector<double> values(body.begin(), body.end());
    return Tensor(Shape{count}, std::move(values));
  }
  std::vector<double> values(count);
  for (std::size_t i = 0; i < count; ++i) values[i] = body[i] / 255.0;
  return Tensor(Shape{static_cast<std::size_t>(dims[0]), static_cast<std::size_t>(dims[1] * dims[2])},
                std::move(values));
}

Tensor load_idx(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return is_gzip(bytes) ? parse_idx(gunzip(bytes)) : parse_idx(bytes);
}

std::vector<std::uint8_t> encode_idx_images(const Tensor& images, std::size_t rows,
                                            std::size_t cols) {
  if (images.rank() != 2 || images.cols() != rows * cols) {
    throw ShapeError("encode_idx_images: expected n x " + std::to_string(rows * cols));
  }
  std::vector<std::uint8_t> out;
  put_be32(out, kIdxImages);
  put_be32(out, static_cast<std::uint32_t>(images.rows()));
  put_be32(out, static_cast<std::uint32_t>(rows));
  put_be32(out, static_cast<std::uint32_t>(cols));
  for (double v : images.data()) {
    out.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
  }
  return out;
}

std::vector<std::uint8_t> encode_idx_labels(const Tensor& labels) {
  if (labels.rank() != 1) throw ShapeError("encode_idx_labels: expected a vector");
  std::vector<std::uint8_t> out;
  put_be32(out, kIdxLabels);
  put_be32(out, static_cast<std::uint32_t>(labels.size()));
  for (double v : labels.data()) out.push_back(static_cast<std::uint8_t>(v));
  return out;
}

Dataset load_idx_dataset(const std::filesystem::path& images, const std::filesystem::path& labels,
                         const std::vector<int>& classes) {
  const Tensor x = load_idx(images);
  const Tensor y = load_idx(labels);
  if (x.rank() != 2) throw ParseError(images.string() + " is not an image stack", 0);
  if (y.rank() != 1) throw ParseError(labels.string() + " is not a label vector", 0);
  if (x.rows() != y.size()) {
    throw ParseError("image/label count mismatch: " + std::to_string(x.rows()) + " vs " +
                         std::to_string(y.size()),
                     4);
  }
  std::vector<int> keep = classes;
  if (keep.empty())
    for (int c = 0; c < 10; ++c) keep.push_back(c);
  std::vector<std::size_t> rows, cls;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const int label = static_cast<int>(y[i]);
    auto it = std::find(keep.begin(), keep.end(), label);
    if (it == keep.end()) continue;
    rows.push_back(i);
    cls.push_back(static_cast<std::size_t>(it - keep.begin()));
  }
  if (rows.empty()) throw std::invalid_argument("no samples of the requested classes");
  Dataset d{take_rows(x, rows), one_hot(cls, keep.size()), true, "all",
            "idx:" + images.filename().string()};
  d.validate();
  return d;
}

Dataset parse_csv(const std::string& text, const CsvSchema& schema) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) {
      header = split_row(line);
      break;
    }
  }
  if (header.empty()) throw ParseError("empty CSV", line_no == 0 ? 1 : line_no);
  const std::size_t header_line = line_no;

  std::vector<std::size_t> label_idx, feature_idx;
  for (const auto& name : schema.label_columns) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw ParseError("missing column '" + name + "'", header_line);
    label_idx.push_back(static_cast<std::size_t>(it - header.begin()));
  }
  for (std::size_t c = 0; c < header.size(); ++c)
    if (std::find(label_idx.begin(), label_idx.end(), c) == label_idx.end()) feature_idx.push_back(c);
  if (feature_idx.empty()) throw ParseError("CSV has no feature columns", header_line);
  if (label_idx.empty()) throw ParseError("CSV schema names no label column", header_line);
  if (schema.num_classes && label_idx.size() != 1) {
    throw ParseError("class labels need exactly one label column", header_line);
  }

  std::vector<double> features, labels;
  std::vector<std::size_t> classes;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_row(line);
    if (cells.size() != header.size()) {
      throw ParseError("expected " + std::to_string(header.size()) + " cells, found " +
                           std::to_string(cells.size()),
                       line_no);
    }
    std::vector<double> row(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const auto& cell = cells[c];
      auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), row[c]);
      if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size() ||
          !std::isfinite(row[c])) {
        throw ParseError("column '" + header[c] + "': '" + cell + "' is not a finite number", line_no);
      }
    }
    for (auto c : feature_idx) features.push_back(row[c]);
    if (schema.num_classes) {
      const double v = row[label_idx[0]];
      if (v < 0 || v != std::floor(v) || v >= static_cast<double>(*schema.num_classes)) {
        throw ParseError("column '" + header[label_idx[0]] + "': class index out of range", line_no);
      }
      classes.push_back(static_cast<std::size_t>(v));
    } else {
      for (auto c : label_idx) labels.push_back(row[c]);
    }
    ++rows;
  }
  if (rows == 0) throw ParseError("CSV has no data rows", line_no);

  Dataset d;
  d.features = Tensor(Shape{rows, feature_idx.size()}, std::move(features));
  if (schema.num_classes) {
    d.labels = one_hot(classes, *schema.num_classes);
    d.classification = true;
  } else {
    d.labels = Tensor(Shape{rows, label_idx.size()}, std::move(labels));
  }
  d.provenance = "csv";
  d.validate();
  return d;
}

Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  Dataset d = parse_csv(read_text_file(path), schema);
  d.provenance = "csv:" + path.filename().string();
  return d;
}

CsvSchema csv_schema_for(const Dataset& data) {
  if (data.classification) return CsvSchema{{"label"}, data.output_dim()};
  CsvSchema s;
  for (std::size_t j = 0; j < data.output_dim(); ++j) s.label_columns.push_back("y" + std::to_string(j + 1));
  return s;
}

std::string format_csv(const Dataset& data) {
  std::string out;
  for (std::size_t j = 0; j < data.input_dim(); ++j) out += (j ? ",x" : "x") + std::to_string(j + 1);
  const auto schema = csv_schema_for(data);
  for (const auto& name : schema.label_columns) out += "," + name;
  out += '\n';
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t j = 0; j < data.input_dim(); ++j) {
      if (j) out += ',';
      out += format_double(data.features(i, j));
    }
    if (data.classification) {
      std::size_t cls = 0;
      for (std::size_t j = 0; j < data.output_dim(); ++j)
        if (data.labels(i, j) > data.labels(i, cls)) cls = j;
      out += "," + std::to_string(cls);
    } else {
      for (std::size_t j = 0; j < data.output_dim(); ++j) out += "," + format_double(data.labels(i, j));
    }
    out += '\n';
  }
  return out;
}

void write_csv(const std::filesystem::path& path, const Dataset& data) {
  write_file_atomic(path, format_csv(data));
}

SyntheticKind parse_synthetic_kind(const std::string& name) {
  if (name == "xor") return SyntheticKind::kXor;
  if (name == "circles") return SyntheticKind::kCircles;
  if (name == "polynomial-regression") return SyntheticKind::kPolynomialRegression;
  throw std::invalid_argument("unknown synthetic dataset '" + name + "'");
}

std::string to_string(SyntheticKind kind) {
  switch (kind) {
    case SyntheticKind::kXor: return "xor";
    case SyntheticKind::kCircles: return "circles";
    case SyntheticKind::kPolynomialRegression: return "polynomial-regression";
  }
  return "?";
}

oracle::DensePoly synthetic_polynomial(std::uint64_t seed, const SyntheticParams& params) {
  if (params.polynomial) return *params.polynomial;
  oracle::DensePoly p(params.input_dim, 1, params.degree);
  Rng rng = Rng::derive(seed, 1);
  Tensor c(p.coefficients().shape());
  for (auto& v : c.data()) v = rng.uniform(-1.0, 1.0);
  p.set_coefficients(std::move(c));
  return p;
}

Dataset make_synthetic(SyntheticKind kind, std::size_t n, std::uint64_t seed,
                       const SyntheticParams& params) {
  if (n == 0) throw std::invalid_argument("make_synthetic: n must be > 0");
  Rng rng(seed);
  Dataset d;
  d.provenance = "synthetic:" + to_string(kind) + ":seed=" + std::to_string(seed);
  switch (kind) {
    case SyntheticKind::kXor: {
      static constexpr double kCorners[4][2] = {{-1, -1}, {-1, 1}, {1, -1}, {1, 1}};
      d.features = Tensor(Shape{n, 2});
      std::vector<std::size_t> cls(n);
      for (std::size_t i = 0; i < n; ++i) {
        const auto& c = kCorners[i % 4];
        for (std::size_t j = 0; j < 2; ++j)
          d.features(i, j) = c[j] + (params.jitter > 0 ? rng.normal(0.0, params.jitter) : 0.0);
        cls[i] = (c[0] > 0) != (c[1] > 0) ? 1 : 0;
      }
      d.labels = one_hot(cls, 2);
      d.classification = true;
      break;
    }
    case SyntheticKind::kCircles: {
      d.features = Tensor(Shape{n, 2});
      std::vector<std::size_t> cls(n);
      for (std::size_t i = 0; i < n; ++i) {
        cls[i] = i % 2;
        const double r = cls[i] == 0 ? params.inner_radius : params.outer_radius;
        const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
        d.features(i, 0) = r * std::cos(angle);
        d.features(i, 1) = r * std::sin(angle);
        if (params.jitter > 0) {
          d.features(i, 0) += rng.normal(0.0, params.jitter);
          d.features(i, 1) += rng.normal(0.0, params.jitter);
        }
      }
      d.labels = one_hot(cls, 2);
      d.classification = true;
      break;
    }
    case SyntheticKind::kPolynomialRegression: {
      const auto poly = synthetic_polynomial(seed, params);
      if (poly.output_dim() != 1) throw std::invalid_argument("regression polynomial must have one output");
      d.features = Tensor(Shape{n, poly.input_dim()});
      for (auto& v : d.features.data()) v = rng.uniform(-1.0, 1.0);
      d.labels = oracle::eval_dense(poly, d.features);
      if (params.noise > 0)
        for (auto& v : d.labels.data()) v += rng.normal(0.0, params.noise);
      break;
    }
  }
  d.validate();
  return d;
}

Dataset subset(const Dataset& data, std::span<const std::size_t> rows) {
  Dataset out = data;
  out.features = take_rows(data.features, rows);
  out.labels = take_rows(data.labels, rows);
  return out;
}

Splits split(const Dataset& data, std::array<double, 3> fractions, std::uint64_t seed) {
  double total = 0.0;
  for (double f : fractions) {
    if (!(f >= 0.0)) throw std::invalid_argument("split: fractions must be non-negative");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("split: fractions must sum to 1");
  const std::size_t n = data.size();
  const auto n_train = static_cast<std::size_t>(std::floor(fractions[0] * static_cast<double>(n) + 1e-9));
  const auto n_val = std::min(n - n_train, static_cast<std::size_t>(std::floor(fractions[1] * static_cast<double>(n) + 1e-9)));
  if (n_train == 0) throw std::invalid_argument("split: training part is empty");

  Rng rng(seed);
  const auto perm = rng.permutation(n);
  auto part = [&](std::size_t begin, std::size_t end, const char* tag) -> std::optional<Dataset> {
    if (begin == end) return std::nullopt;
    Dataset d = subset(data, std::span<const std::size_t>(perm).subspan(begin, end - begin));
    d.split = tag;
    return d;
  };
  Splits s{*part(0, n_train, "train"), part(n_train, n_train + n_val, "val"),
           part(n_train + n_val, n, "test")};
  return s;
}

}  // namespace pinet::data
