#include "pinet/cli.hpp"

#include <CLI11.hpp>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <sstream>

#include "pinet/checkpoint.hpp"
#include "pinet/config.hpp"
#include "pinet/error.hpp"
#include "pinet/io.hpp"
#include "pinet/oracle.hpp"
#include "pinet/verify.hpp"

namespace pinet::cli {

namespace fs = std::filesystem;
using config::json;

namespace {

/// Shortest round-trip form.
std::string num(double v) {
  char buf[32];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

/// Human-readable form for reports.
std::string short_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

std::string pct(std::optional<double> v) {
  if (!v) return "-";
  char buf[16];
  std::snprintf(buf, sizeof buf, "%.2f%%", 100.0 * *v);
  return buf;
}

void write_json(const fs::path& path, const json& j) { write_file_atomic(path, j.dump(2) + "\n"); }

fs::path config_base_dir(const fs::path& config_path) {
  return fs::absolute(config_path).parent_path();
}

// ---------------------------------------------------------------- train

struct Check {
  std::string name;
  double value;
  double bound;
  bool passed;
};

std::vector<Check> check_expectations(const config::ExpectConfig& e, const train::EpochMetrics& last) {
  std::vector<Check> checks;
  auto lower = [&](const char* name, std::optional<double> value, std::optional<double> bound) {
    if (!bound) return;
    const double v = value.value_or(NAN);
    checks.push_back({name, v, *bound, v >= *bound});
  };
  auto upper = [&](const char* name, std::optional<double> value, std::optional<double> bound) {
    if (!bound) return;
    const double v = value.value_or(NAN);
    checks.push_back({name, v, *bound, v <= *bound});
  };
  lower("train_accuracy_min", last.train_accuracy, e.train_accuracy_min);
  upper("train_accuracy_max", last.train_accuracy, e.train_accuracy_max);
  lower("test_accuracy_min", last.test_accuracy, e.test_accuracy_min);
  upper("test_accuracy_max", last.test_accuracy, e.test_accuracy_max);
  upper("train_loss_max", last.train_loss, e.train_loss_max);
  upper("test_loss_max", last.test_loss, e.test_loss_max);
  if (e.pinned_test_accuracy) {
    const double v = last.test_accuracy.value_or(NAN);
    checks.push_back({"pinned_test_accuracy", v, *e.pinned_test_accuracy,
                      std::abs(v - *e.pinned_test_accuracy) <= e.pin_tolerance});
  }
  return checks;
}

int cmd_train(const fs::path& config_path, const std::vector<std::string>& overrides,
              const std::string& output_override, std::ostream& out) {
  json doc = config::load_json(config_path);
  config::apply_overrides(doc, overrides);
  config::RunConfig cfg = config::parse_run_config(doc, config_base_dir(config_path));
  if (!output_override.empty()) cfg.output_dir = output_override;
  cfg.output_dir = config::resolve_output_dir(cfg.output_dir);
  const fs::path dir = cfg.output_dir;
  write_json(dir / "resolved_config.json", config::to_json(cfg));

  const auto loaded = config::load_data(cfg);
  ProductNet model = config::build_model(cfg);
  out << "train: " << loaded.train.size() << " samples"
      << (loaded.test ? ", test: " + std::to_string(loaded.test->size()) + " samples" : std::string())
      << ", " << model.blocks().size() << " block(s), " << model.param_count() << " parameters, degree "
      << model.total_degree() << "\n";

  const std::size_t every = cfg.train.checkpoint_every;
  auto on_epoch = [&](std::size_t epoch, const ProductNet& net) {
    if (every == 0 || epoch % every != 0) return;
    char name[32];
    std::snprintf(name, sizeof name, "epoch-%04zu.pinet", epoch);
    write_checkpoint(dir / "checkpoints" / name, net, cfg.witness_points, cfg.seed);
  };
  const auto result =
      train::train(std::move(model), loaded.train, loaded.test ? &*loaded.test : nullptr, cfg.train, on_epoch);

  write_file_atomic(dir / "metrics.csv", result.log.to_csv());
  write_file_atomic(dir / "timing.csv", result.log.timing_csv());
  write_checkpoint(dir / "model.pinet", result.model, cfg.witness_points, cfg.seed);

  const std::size_t epochs = result.log.epochs.size();
  const std::size_t stride = std::max<std::size_t>(1, epochs / 10);
  for (const auto& e : result.log.epochs) {
    if (e.epoch % stride != 0 && e.epoch != epochs) continue;
    out << "epoch " << e.epoch << "/" << epochs << "  loss " << short_num(e.train_loss) << "  acc "
        << pct(e.train_accuracy);
    if (e.test_loss) out << "  test loss " << short_num(*e.test_loss) << "  test acc " << pct(e.test_accuracy);
    out << "\n";
  }

  const auto& last = result.log.epochs.back();
  const auto checks = check_expectations(cfg.expect, last);
  bool passed = true;
  json checks_json = json::array();
  for (const auto& c : checks) {
    passed = passed && c.passed;
    out << (c.passed ? "PASS " : "FAIL ") << c.name << ": " << short_num(c.value) << " vs "
        << short_num(c.bound) << "\n";
    checks_json.push_back({{"name", c.name}, {"value", c.value}, {"bound", c.bound}, {"passed", c.passed}});
  }
  std::size_t dense = 0;
  for (const auto& b : result.model.blocks())
    dense += dense_param_count(b.spec.input_dim, b.spec.output_dim, b.spec.degree());
  auto opt = [](std::optional<double> v) { return v ? json(*v) : json(nullptr); };
  write_json(dir / "summary.json",
             {{"epochs", epochs},
              {"train_loss", last.train_loss},
              {"train_accuracy", opt(last.train_accuracy)},
              {"test_loss", opt(last.test_loss)},
              {"test_accuracy", opt(last.test_accuracy)},
              {"param_count", result.model.param_count()},
              {"dense_param_count", dense},
              {"total_degree", result.model.total_degree()},
              {"expectations", checks_json},
              {"passed", passed}});
  out << "outputs: " << dir.string() << "\n";
  return passed ? kSuccess : kCheckFailed;
}

// ---------------------------------------------------------------- verify

json suite_json(const verify::SuiteResult& s) {
  json cases = json::array();
  for (const auto& c : s.cases) {
    cases.push_back({{"name", c.name},
                     {"passed", c.passed},
                     {"value", std::isfinite(c.value) ? json(c.value) : json(nullptr)},
                     {"threshold", c.threshold},
                     {"detail", c.detail}});
  }
  return {{"name", s.name},
          {"passed", s.passed()},
          {"cases", s.cases.size()},
          {"failures", s.failures()},
          {"seconds", s.seconds},
          {"results", cases}};
}

std::string suite_line(const verify::SuiteResult& s) {
  std::ostringstream os;
  os << (s.passed() ? "PASS " : "FAIL ") << s.name << ": " << (s.cases.size() - s.failures()) << "/"
     << s.cases.size() << " cases, worst " << short_num(s.worst_value()) << " ("
     << std::fixed << std::setprecision(2) << s.seconds << " s)";
  return os.str();
}

int cmd_verify(const std::string& config_path, const std::vector<std::string>& overrides,
               const std::string& checkpoint, const std::string& output_override, std::ostream& out) {
  json doc = config_path.empty() ? json::object() : config::load_json(config_path);
  config::apply_overrides(doc, overrides);
  const fs::path base = config_path.empty() ? fs::current_path() : config_base_dir(config_path);
  config::VerifyConfig cfg = config::parse_verify_config(doc, base);
  if (!checkpoint.empty()) cfg.checkpoint = fs::absolute(checkpoint).lexically_normal();
  if (!output_override.empty()) cfg.output_dir = output_override;
  cfg.output_dir = config::resolve_output_dir(cfg.output_dir);
  write_json(cfg.output_dir / "resolved_config.json", config::to_json(cfg));

  std::vector<verify::SuiteResult> suites;
  if (cfg.oracle_grid_enabled) suites.push_back(verify::oracle_grid(cfg.oracle_grid, cfg.seed));
  if (cfg.degree_law_enabled) suites.push_back(verify::degree_law(cfg.degree_law, cfg.seed));
  if (cfg.grad_check_enabled) suites.push_back(verify::grad_checks(cfg.grad_check, cfg.seed));
  if (cfg.checkpoint)
    suites.push_back(verify::checkpoint_checks(*cfg.checkpoint, cfg.checkpoint_checks, cfg.seed));

  bool passed = true;
  json report = json::array();
  std::ostringstream text;
  for (const auto& s : suites) {
    passed = passed && s.passed();
    text << suite_line(s) << "\n";
    std::size_t shown = 0;
    for (const auto& c : s.cases) {
      if (c.passed || shown++ >= 10) continue;
      text << "  failed " << c.name << ": " << short_num(c.value) << " vs " << short_num(c.threshold)
           << (c.detail.empty() ? "" : " (" + c.detail + ")") << "\n";
    }
    report.push_back(suite_json(s));
  }
  text << (passed ? "all checks passed" : "verification failed") << "\n";
  write_json(cfg.output_dir / "verify-report.json", {{"passed", passed}, {"suites", report}});
  write_file_atomic(cfg.output_dir / "verify-report.txt", text.str());
  out << text.str();
  return passed ? kSuccess : kCheckFailed;
}

// ---------------------------------------------------------------- expand

ProductNet load_model(const fs::path& path) { return load_checkpoint(path); }

int cmd_expand(const fs::path& checkpoint, std::size_t max_basis, std::uint64_t seed, double threshold,
               const std::string& output_dir, std::ostream& out) {
  const ProductNet net = load_model(checkpoint);
  if (!net.is_polynomial())
    throw std::invalid_argument("model has a stabilizer or activation and is not a polynomial");
  const std::size_t d = net.input_dim(), o = net.output_dim(), degree = net.total_degree();
  const std::size_t basis = oracle::basis_size(d, degree);
  if (basis > max_basis) throw oracle::BudgetExceededError(d, degree, basis, max_basis);
  const auto fit = oracle::fit_dense(verify::as_function(net), d, o, degree,
                                     {.seed = seed, .max_basis = max_basis});

  std::ostringstream report, kv;
  report << "expansion of " << checkpoint.filename().string() << "\n"
         << "input_dim " << d << ", output_dim " << o << ", total degree " << degree << ", basis " << basis
         << " monomials\n"
         << "fit residual " << short_num(fit.residual) << ", condition " << short_num(fit.condition_estimate)
         << ", rank " << fit.rank << ", samples " << fit.samples << "\n"
         << "coefficients with |c| > " << short_num(threshold) << "\n";
  kv << "input_dim=" << d << "\n"
     << "output_dim=" << o << "\n"
     << "degree=" << degree << "\n"
     << "basis_size=" << basis << "\n"
     << "residual=" << num(fit.residual) << "\n"
     << "condition=" << num(fit.condition_estimate) << "\n"
     << "rank=" << fit.rank << "\n"
     << "samples=" << fit.samples << "\n"
     << "threshold=" << num(threshold) << "\n";
  const auto& monomials = fit.poly.basis();
  for (std::size_t j = 0; j < o; ++j) {
    report << "\noutput y" << (j + 1) << "\n";
    std::size_t listed = 0;
    for (std::size_t r = 0; r < monomials.size(); ++r) {
      const double c = fit.poly.coefficients()(r, j);
      if (!(std::abs(c) > threshold)) continue;
      const std::string name = monomials[r].to_string();
      report << "  " << std::left << std::setw(16) << name << " " << short_num(c) << "\n";
      kv << "y" << (j + 1) << "." << name << "=" << num(c) << "\n";
      ++listed;
    }
    if (listed == 0) report << "  (all coefficients below threshold)\n";
  }
  out << report.str();
  const fs::path dir = config::resolve_output_dir(output_dir);
  write_file_atomic(dir / "expand.txt", report.str());
  write_file_atomic(dir / "expand.kv", kv.str());
  out << "outputs: " << dir.string() << "\n";
  return kSuccess;
}

// ---------------------------------------------------------------- degree

int cmd_degree(const fs::path& checkpoint, std::uint64_t seed, std::optional<std::size_t> max_degree,
               std::ostream& out) {
  const ProductNet net = load_model(checkpoint);
  const std::size_t declared = net.total_degree();
  const std::size_t top = max_degree.value_or(declared + 2);
  const auto probe = oracle::probe_degree(verify::as_function(net), net.input_dim(), seed, top);
  out << "declared total_degree " << declared << " (product of block degrees";
  for (const auto& b : net.blocks()) out << " " << b.spec.degree();
  out << ")\n";
  for (std::size_t j = 0; j < probe.per_output.size(); ++j) {
    const auto& d = probe.per_output[j];
    out << "output y" << (j + 1) << ": "
        << (d ? "degree " + std::to_string(*d) : "exceeds max " + std::to_string(top)) << "\n";
  }
  const bool polynomial_spec = net.is_polynomial();
  if (!probe.degree()) {
    out << "realised degree exceeds max " << top << ": model is non-polynomial";
    out << (polynomial_spec ? " but declares no stabilizer or activation\n" : " (stabilizer or activation)\n");
    return polynomial_spec ? kCheckFailed : kSuccess;
  }
  const bool match = *probe.degree() == declared;
  out << "realised degree " << *probe.degree() << (match ? " matches" : " differs from") << " declared "
      << declared << "\n";
  if (!polynomial_spec) {
    out << "model declares a stabilizer or activation but probes as polynomial\n";
    return kSuccess;
  }
  return match ? kSuccess : kCheckFailed;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Polynomial network training, verification and inspection"};
  app.name(args.empty() ? "pinet" : fs::path(args[0]).filename().string());
  app.require_subcommand(1);

  std::string train_config, train_output;
  std::vector<std::string> train_overrides;
  auto* train_cmd = app.add_subcommand("train", "Train a model from a JSON config");
  train_cmd->add_option("config", train_config, "Run configuration (JSON)")->required();
  train_cmd->add_option("--set", train_overrides, "Override a config key, e.g. train.epochs=5");
  train_cmd->add_option("--output-dir", train_output, "Output directory (overrides output_dir)");

  std::string verify_config, verify_checkpoint, verify_output;
  std::vector<std::string> verify_overrides;
  auto* verify_cmd = app.add_subcommand("verify", "Run the invariant battery");
  verify_cmd->add_option("config", verify_config, "Verification configuration (JSON)");
  verify_cmd->add_option("--checkpoint", verify_checkpoint, "Also check this checkpoint");
  verify_cmd->add_option("--set", verify_overrides, "Override a config key");
  verify_cmd->add_option("--output-dir", verify_output, "Output directory (overrides output_dir)");

  std::string expand_checkpoint, expand_output = "runs/expand";
  std::size_t max_basis = 5000;
  std::uint64_t expand_seed = 0;
  double threshold = 1e-9;
  auto* expand_cmd = app.add_subcommand("expand", "Recover dense monomial coefficients of a checkpoint");
  expand_cmd->add_option("checkpoint", expand_checkpoint, "Checkpoint file")->required();
  expand_cmd->add_option("--max-basis", max_basis, "Largest monomial basis to fit")->capture_default_str();
  expand_cmd->add_option("--seed", expand_seed, "Sampling seed")->capture_default_str();
  expand_cmd->add_option("--threshold", threshold, "Hide coefficients at or below this magnitude")
      ->capture_default_str();
  expand_cmd->add_option("--output-dir", expand_output, "Output directory")->capture_default_str();

  std::string degree_checkpoint;
  std::uint64_t degree_seed = 0;
  std::optional<std::size_t> degree_max;
  auto* degree_cmd = app.add_subcommand("degree", "Probe the realised polynomial degree of a checkpoint");
  degree_cmd->add_option("checkpoint", degree_checkpoint, "Checkpoint file")->required();
  degree_cmd->add_option("--seed", degree_seed, "Probe seed")->capture_default_str();
  degree_cmd->add_option("--max-degree", degree_max, "Highest degree to test (default declared + 2)");

  std::vector<std::string> argv_tail(args.size() > 1 ? args.begin() + 1 : args.end(), args.end());
  std::reverse(argv_tail.begin(), argv_tail.end());
  try {
    app.parse(argv_tail);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kSuccess : kUsageError;
  }

  try {
    if (*train_cmd) return cmd_train(train_config, train_overrides, train_output, out);
    if (*verify_cmd) return cmd_verify(verify_config, verify_overrides, verify_checkpoint, verify_output, out);
    if (*expand_cmd) return cmd_expand(expand_checkpoint, max_basis, expand_seed, threshold, expand_output, out);
    if (*degree_cmd) return cmd_degree(degree_checkpoint, degree_seed, degree_max, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kIoError;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kIoError;
  } catch (const CorruptCheckpointError& e) {
    err << "error: " << e.what() << "\n";
    return kIoError;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kIoError;
  } catch (const train::DivergenceError& e) {
    err << "error: training diverged: " << e.what() << "\n";
    return kCheckFailed;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kCheckFailed;
  }
  return kUsageError;
}

}  // namespace pinet::cli
