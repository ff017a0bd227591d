// End-to-end acceptance run: one PASS/FAIL line per criterion, exit status 0
// iff every line passes. Bounds are pinned here, next to the checks.

#include <zlib.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pinet/blocks.hpp"
#include "pinet/checkpoint.hpp"
#include "pinet/cli.hpp"
#include "pinet/io.hpp"
#include "pinet/verify.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kSource = PINET_SOURCE_DIR;
const fs::path kRuns = fs::path(PINET_BINARY_DIR) / "acceptance-runs";

struct Outcome {
  bool passed = false;
  std::string detail{};
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

struct CliRun {
  int code = -1;
  double seconds = 0.0;
  std::string out;
  std::string err;
};

CliRun cli(std::vector<std::string> args) {
  args.insert(args.begin(), "pinet");
  std::ostringstream out, err;
  const auto t0 = std::chrono::steady_clock::now();
  CliRun r;
  r.code = pinet::cli::run(args, out, err);
  r.seconds = seconds_since(t0);
  r.out = out.str();
  r.err = err.str();
  return r;
}

CliRun train_recipe(const std::string& recipe) {
  return cli({"train", (kSource / "recipes" / (recipe + ".json")).string(), "--output-dir",
              (kRuns / recipe).string()});
}

json summary(const std::string& recipe) {
  return json::parse(pinet::read_text_file(kRuns / recipe / "summary.json"));
}

std::string failure_text(const CliRun& r) { return "exit " + std::to_string(r.code) + ": " + r.err; }

Outcome suite_outcome(const pinet::verify::SuiteResult& s, double bound, double time_limit,
                      const char* value_format) {
  Outcome o;
  o.passed = s.passed() && s.worst_value() <= bound && s.seconds < time_limit && !s.cases.empty();
  o.detail = std::to_string(s.cases.size() - s.failures()) + "/" + std::to_string(s.cases.size()) +
             " cases, worst " + fmt(value_format, s.worst_value()) + ", " + fmt("%.2f", s.seconds) +
             " s < " + fmt("%.0f", time_limit) + " s";
  for (const auto& c : s.cases) {
    if (c.passed) continue;
    o.detail += "; first failure " + c.name + " " + c.detail;
    break;
  }
  return o;
}

Outcome oracle_equivalence() {
  const auto s = pinet::verify::oracle_grid({}, 0);
  auto o = suite_outcome(s, 1e-9, 60.0, "%.2e");
  o.detail = "recursion vs dense fit, " + o.detail + " (bound 1e-9)";
  return o;
}

Outcome degree_law() {
  const auto s = pinet::verify::degree_law({}, 0);
  auto o = suite_outcome(s, 0.0, 30.0, "%.0f");
  o.detail = "probed degree == product of block degrees, " + o.detail;
  return o;
}

Outcome gradient_checks() {
  const auto s = pinet::verify::grad_checks({.instances = 100, .step = 1e-6, .tolerance = 1e-5,
                                             .absolute_floor = 1e-8},
                                            0);
  auto o = suite_outcome(s, 1e-5, 60.0, "%.2e");
  o.passed = o.passed && s.cases.size() == 100;
  o.detail = "relative error, " + o.detail + " (bound 1e-5)";
  return o;
}

Outcome learnability() {
  Outcome o{.passed = true};
  double slowest = 0.0;
  auto run = [&](const std::string& recipe, const std::string& key, const char* label) {
    const auto r = train_recipe(recipe);
    slowest = std::max(slowest, r.seconds);
    if (r.code != 0 || r.seconds >= 60.0) {
      o.passed = false;
      o.detail += recipe + " failed (" + failure_text(r) + ", " + fmt("%.1f", r.seconds) + " s); ";
      return;
    }
    const json s = summary(recipe);
    o.detail += std::string(label) + " " + fmt(key == "train_loss" ? "%.2e" : "%.4f", s[key].get<double>()) + "; ";
  };
  run("xor", "train_accuracy", "xor N=2 train acc (>= 1)");
  run("xor-control", "train_accuracy", "xor N=1 train acc (<= 0.75)");
  run("circles", "test_accuracy", "circles N=2 test acc (>= 0.99)");
  run("circles-control", "test_accuracy", "circles N=1 test acc (<= 0.60)");
  run("quadratic", "train_loss", "quadratic MSE (< 1e-6)");
  o.detail += "slowest " + fmt("%.1f", slowest) + " s < 60 s";
  return o;
}

Outcome mnist() {
  Outcome o{.passed = true};
  for (const std::string recipe : {"mnist-binary", "mnist-10class"}) {
    const auto r = train_recipe(recipe);
    if (r.code != 0 || r.seconds > 900.0) {
      o.passed = false;
      o.detail += recipe + " failed (" + failure_text(r) + ", " + fmt("%.1f", r.seconds) + " s); ";
      continue;
    }
    const json s = summary(recipe);
    o.detail += recipe + " test acc " + fmt("%.4f", s["test_accuracy"].get<double>()) + " in " +
                fmt("%.1f", r.seconds) + " s; ";
  }
  o.detail += "bounds 0.98 / 0.92, pins +-0.005, <= 900 s each";
  return o;
}

Outcome parameter_economy() {
  const pinet::PolyBlockSpec spec{.variant = pinet::Variant::kCcp, .order = 3, .rank = 64,
                                  .input_dim = 64, .output_dim = 64};
  const std::size_t factored = pinet::param_count(spec);
  const std::size_t dense = pinet::dense_param_count(64, 64, 3);
  const std::size_t realised = pinet::init_params(spec, 0).element_count();
  // Independent count: N d k + o k + o, and o * (d + d^2 + d^3) + o.
  const std::size_t expect_factored = 3 * 64 * 64 + 64 * 64 + 64;
  const std::size_t expect_dense = 64 * (64 + 64 * 64 + 64 * 64 * 64) + 64;
  const double ratio = static_cast<double>(factored) / static_cast<double>(dense);
  return {.passed = factored == 16448 && dense == 17043520 && realised == factored &&
                    factored == expect_factored && dense == expect_dense && ratio < 0.01,
          .detail = "CCP d=o=k=64 N=3: " + std::to_string(factored) + " vs dense " + std::to_string(dense) +
                    " (" + fmt("%.4f", 100.0 * ratio) + "% < 1%)"};
}

Outcome determinism() {
  Outcome o{.passed = true};
  for (const std::string recipe : {"xor", "circles", "quadratic"}) {
    const fs::path first = kRuns / recipe;
    const fs::path again = kRuns / (recipe + "-rerun");
    const auto r = cli({"train", (first / "resolved_config.json").string(), "--output-dir", again.string()});
    const bool same = r.code == 0 && fs::exists(first / "metrics.csv") &&
                      pinet::read_file(first / "metrics.csv") == pinet::read_file(again / "metrics.csv");
    o.passed = o.passed && same;
    o.detail += recipe + (same ? " identical; " : " DIFFERS (" + failure_text(r) + "); ");
  }
  o.detail += "metrics.csv compared byte for byte after rerunning from resolved_config.json";
  return o;
}

/// Byte offset of the first value of the first parameter tensor.
std::size_t first_parameter_offset(const std::vector<std::uint8_t>& bytes) {
  const auto decoded = pinet::decode_checkpoint(bytes);
  const double value = decoded.net.blocks().front().params.tensors.front().value[0];
  std::uint8_t pattern[8];
  std::memcpy(pattern, &value, 8);
  for (std::size_t i = 0; i + 8 <= bytes.size(); ++i)
    if (std::memcmp(bytes.data() + i, pattern, 8) == 0) return i;
  throw std::runtime_error("parameter bytes not found");
}

Outcome checkpoint_mutation() {
  const fs::path model = kRuns / "xor" / "model.pinet";
  if (!fs::exists(model)) return {.passed = false, .detail = "no xor checkpoint to mutate"};
  const auto verify_only = [](const fs::path& ckpt, const std::string& tag) {
    return cli({"verify", "--checkpoint", ckpt.string(), "--set", "oracle_grid.enabled=false", "--set",
                "degree_law.enabled=false", "--set", "grad_check.enabled=false", "--output-dir",
                (kRuns / ("verify-" + tag)).string()});
  };
  const auto clean = verify_only(model, "clean");

  auto bytes = pinet::read_file(model);
  const std::size_t offset = first_parameter_offset(bytes);
  auto flipped = bytes;
  flipped[offset] ^= 0x01;
  const fs::path flipped_path = kRuns / "flipped.pinet";
  pinet::write_file_atomic(flipped_path, flipped);
  const auto caught_by_crc = verify_only(flipped_path, "flipped");

  // Same kind of flip with the trailer recomputed: only the witness can notice.
  auto resealed = bytes;
  resealed[offset + 6] ^= 0x10;
  const std::size_t body = resealed.size() - 4;
  const auto crc = static_cast<std::uint32_t>(crc32(0L, resealed.data(), static_cast<uInt>(body)));
  for (int i = 0; i < 4; ++i) resealed[body + i] = static_cast<std::uint8_t>(crc >> (8 * i));
  const fs::path resealed_path = kRuns / "resealed.pinet";
  pinet::write_file_atomic(resealed_path, resealed);
  const auto caught_by_witness = verify_only(resealed_path, "resealed");

  return {.passed = clean.code == 0 && caught_by_crc.code == 1 && caught_by_witness.code == 1,
          .detail = "verify exit codes: intact " + std::to_string(clean.code) + ", byte " +
                    std::to_string(offset) + " flipped " + std::to_string(caught_by_crc.code) +
                    ", flipped with resealed crc " + std::to_string(caught_by_witness.code) +
                    " (want 0, 1, 1)"};
}

}  // namespace

int main() {
  std::error_code ec;
  fs::remove_all(kRuns, ec);
  fs::create_directories(kRuns);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"oracle-equivalence", oracle_equivalence}, {"degree-law", degree_law},
      {"gradient-check", gradient_checks},        {"learnability", learnability},
      {"mnist", mnist},                           {"parameter-economy", parameter_economy},
      {"determinism", determinism},               {"checkpoint-mutation", checkpoint_mutation},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {.passed = false, .detail = std::string("exception: ") + e.what()};
    }
    failures += o.passed ? 0 : 1;
    std::cout << (o.passed ? "PASS " : "FAIL ") << (i + 1) << " " << criteria[i].first << ": " << o.detail
              << std::endl;
  }
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
