#include <gtest/gtest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <sstream>

#include "pinet/checkpoint.hpp"
#include "pinet/cli.hpp"
#include "pinet/config.hpp"
#include "pinet/io.hpp"

namespace pinet::cli {
namespace {

namespace fs = std::filesystem;
using config::json;

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "pinet");
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("pinet_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    ::unsetenv(config::kOutputRootEnv);
  }
  void TearDown() override {
    ::unsetenv(config::kOutputRootEnv);
    fs::remove_all(dir_);
  }

  fs::path write_config(const json& doc, const std::string& name = "config.json") {
    const fs::path p = dir_ / name;
    write_file_atomic(p, doc.dump(2));
    return p;
  }

  static json xor_config() {
    return json::parse(R"({
      "seed": 3,
      "output_dir": "run",
      "data": {"source": "synthetic", "kind": "xor", "samples": 16},
      "model": {"blocks": [{"variant": "ncp-skip", "order": 2, "rank": 4, "input_dim": 2,
                            "output_dim": 2, "init": "bias-ones"}]},
      "train": {"optimizer": "adam", "learning_rate": 0.05, "epochs": 3, "batch_size": 8}
    })");
  }

  fs::path save_net(const ProductNet& net, const std::string& name) {
    const fs::path p = dir_ / name;
    write_checkpoint(p, net);
    return p;
  }

  fs::path dir_;
};

TEST_F(CliTest, UsageErrors) {
  EXPECT_EQ(run_cli({}).code, kUsageError);
  EXPECT_EQ(run_cli({"bogus"}).code, kUsageError);
  EXPECT_EQ(run_cli({"train"}).code, kUsageError);
  EXPECT_EQ(run_cli({"train", "x.json", "--no-such-flag"}).code, kUsageError);
  EXPECT_EQ(run_cli({"--help"}).code, kSuccess);
}

TEST_F(CliTest, MissingFilesAreIoErrors) {
  EXPECT_EQ(run_cli({"train", (dir_ / "missing.json").string()}).code, kIoError);
  EXPECT_EQ(run_cli({"expand", (dir_ / "missing.pinet").string()}).code, kIoError);
  EXPECT_EQ(run_cli({"degree", (dir_ / "missing.pinet").string()}).code, kIoError);
  json doc = xor_config();
  doc["data"] = {{"source", "idx"}, {"train_images", "nope.idx"}, {"train_labels", "nope.idx"}};
  doc["model"]["blocks"][0]["input_dim"] = 784;
  EXPECT_EQ(run_cli({"train", write_config(doc).string(), "--output-dir", (dir_ / "o").string()}).code,
            kIoError);
}

TEST_F(CliTest, NegativeLearningRateExitsNonzeroNamingTheKey) {
  json doc = xor_config();
  doc["train"]["learning_rate"] = -1.0;
  const auto r = run_cli({"train", write_config(doc).string()});
  EXPECT_EQ(r.code, kUsageError);
  EXPECT_NE(r.err.find("train.learning_rate"), std::string::npos) << r.err;
}

TEST_F(CliTest, InvalidJsonIsAUsageError) {
  write_file_atomic(dir_ / "bad.json", std::string("{"));
  EXPECT_EQ(run_cli({"train", (dir_ / "bad.json").string()}).code, kUsageError);
}

TEST_F(CliTest, ModelDataMismatchIsAUsageError) {
  json doc = xor_config();
  doc["model"]["blocks"][0]["input_dim"] = 3;
  const auto r = run_cli({"train", write_config(doc).string(), "--output-dir", (dir_ / "o").string()});
  EXPECT_EQ(r.code, kUsageError);
  EXPECT_NE(r.err.find("model"), std::string::npos);
}

TEST_F(CliTest, TrainWritesEveryOutputAtomically) {
  json doc = xor_config();
  doc["train"]["checkpoint_every"] = 1;
  const fs::path out = dir_ / "out";
  const auto r = run_cli({"train", write_config(doc).string(), "--output-dir", out.string()});
  ASSERT_EQ(r.code, kSuccess) << r.err;
  for (const char* f : {"resolved_config.json", "metrics.csv", "timing.csv", "model.pinet", "summary.json",
                        "checkpoints/epoch-0001.pinet", "checkpoints/epoch-0002.pinet",
                        "checkpoints/epoch-0003.pinet"})
    EXPECT_TRUE(fs::exists(out / f)) << f;
  for (const auto& e : fs::recursive_directory_iterator(out))
    EXPECT_EQ(e.path().filename().string().find(".tmp"), std::string::npos) << e.path();

  const std::string csv = read_text_file(out / "metrics.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "epoch,train_loss,train_accuracy,test_loss,test_accuracy,param_norm,grad_norm,learning_rate");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);

  const json resolved = json::parse(read_text_file(out / "resolved_config.json"));
  EXPECT_EQ(resolved["output_dir"], out.string());
  EXPECT_EQ(resolved["seed"], 3);
  EXPECT_EQ(resolved["train"]["checkpoint_every"], 1);
  EXPECT_EQ(read_checkpoint(out / "checkpoints/epoch-0003.pinet").net.parameters(),
            read_checkpoint(out / "model.pinet").net.parameters());
}

TEST_F(CliTest, OverridesApplyAfterTheConfigFile) {
  const fs::path out = dir_ / "out";
  const auto r = run_cli({"train", write_config(xor_config()).string(), "--output-dir", out.string(), "--set",
                          "train.epochs=2", "--set", "seed=9"});
  ASSERT_EQ(r.code, kSuccess) << r.err;
  const json resolved = json::parse(read_text_file(out / "resolved_config.json"));
  EXPECT_EQ(resolved["train"]["epochs"], 2);
  EXPECT_EQ(resolved["seed"], 9);
}

TEST_F(CliTest, RelativeOutputGoesUnderTheOutputRoot) {
  ::setenv(config::kOutputRootEnv, (dir_ / "root").c_str(), 1);
  const auto r = run_cli({"train", write_config(xor_config()).string()});
  ASSERT_EQ(r.code, kSuccess) << r.err;
  EXPECT_TRUE(fs::exists(dir_ / "root" / "run" / "metrics.csv"));
}

TEST_F(CliTest, RerunFromResolvedConfigIsBitIdentical) {
  const auto first = run_cli({"train", write_config(xor_config()).string(), "--output-dir", (dir_ / "a").string()});
  ASSERT_EQ(first.code, kSuccess) << first.err;
  const auto again =
      run_cli({"train", (dir_ / "a" / "resolved_config.json").string(), "--output-dir", (dir_ / "b").string()});
  ASSERT_EQ(again.code, kSuccess) << again.err;
  EXPECT_EQ(read_file(dir_ / "a" / "metrics.csv"), read_file(dir_ / "b" / "metrics.csv"));
  EXPECT_EQ(read_file(dir_ / "a" / "model.pinet"), read_file(dir_ / "b" / "model.pinet"));
}

TEST_F(CliTest, FailedExpectationExitsOne) {
  json doc = xor_config();
  doc["expect"] = {{"train_accuracy_min", 1.5}};
  const auto r = run_cli({"train", write_config(doc).string(), "--output-dir", (dir_ / "o").string()});
  EXPECT_EQ(r.code, kCheckFailed);
  EXPECT_NE(r.out.find("FAIL train_accuracy_min"), std::string::npos);
  EXPECT_FALSE(json::parse(read_text_file(dir_ / "o" / "summary.json"))["passed"].get<bool>());
}

TEST_F(CliTest, DivergenceExitsOneNamingTheEpoch) {
  json doc = xor_config();
  doc["model"]["blocks"][0] = {{"variant", "ccp"}, {"order", 3}, {"rank", 4}, {"input_dim", 2},
                               {"output_dim", 2}};
  doc["train"] = {{"optimizer", "sgd-momentum"}, {"learning_rate", 1e12}, {"clip", nullptr}, {"epochs", 5}};
  const auto r = run_cli({"train", write_config(doc).string(), "--output-dir", (dir_ / "o").string()});
  EXPECT_EQ(r.code, kCheckFailed);
  EXPECT_NE(r.err.find("epoch"), std::string::npos) << r.err;
}

TEST_F(CliTest, ExpandHandCcpListsExactlyTwoMonomials) {
  const PolyBlockSpec spec{.variant = Variant::kCcp, .order = 2, .rank = 1, .input_dim = 2, .output_dim = 1};
  PolyBlockParams p;
  p.tensors = {{"U1", Tensor::matrix({{1}, {0}})},
               {"U2", Tensor::matrix({{0}, {1}})},
               {"C", Tensor::matrix({{1}})},
               {"beta", Tensor::vector({0})}};
  const fs::path ckpt = save_net(ProductNet({{spec, p}}), "hand.pinet");
  const auto r = run_cli({"expand", ckpt.string(), "--output-dir", (dir_ / "exp").string()});
  ASSERT_EQ(r.code, kSuccess) << r.err;

  std::map<std::string, std::string> kv;
  std::istringstream lines(read_text_file(dir_ / "exp" / "expand.kv"));
  for (std::string line; std::getline(lines, line);) {
    const auto eq = line.find('=');
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  std::vector<std::string> terms;
  for (const auto& [k, v] : kv)
    if (k.rfind("y1.", 0) == 0) terms.push_back(k);
  EXPECT_EQ(terms, (std::vector<std::string>{"y1.z1", "y1.z1*z2"}));
  EXPECT_NEAR(std::stod(kv["y1.z1"]), 1.0, 1e-12);
  EXPECT_NEAR(std::stod(kv["y1.z1*z2"]), 1.0, 1e-12);
  EXPECT_LT(std::stod(kv["residual"]), 1e-9);
  EXPECT_GE(std::stod(kv["condition"]), 1.0);
  EXPECT_EQ(kv["basis_size"], "6");

  const std::string report = read_text_file(dir_ / "exp" / "expand.txt");
  EXPECT_NE(report.find("\n  z1 "), std::string::npos);
  EXPECT_NE(report.find("z1*z2"), std::string::npos);
  EXPECT_EQ(report.find("\n  z2 "), std::string::npos);
  EXPECT_EQ(report.find("z1^2"), std::string::npos);
}

TEST_F(CliTest, ExpandRefusesOversizedBasis) {
  const PolyBlockSpec spec{.variant = Variant::kCcp, .order = 6, .rank = 2, .input_dim = 10, .output_dim = 1};
  const fs::path ckpt = save_net(ProductNet({{spec, init_params(spec, 0)}}), "big.pinet");
  const auto r = run_cli({"expand", ckpt.string(), "--output-dir", (dir_ / "exp").string()});
  EXPECT_EQ(r.code, kUsageError);
  EXPECT_NE(r.err.find("C(16,6)=8008 exceeds budget"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(dir_ / "exp" / "expand.kv"));
}

TEST_F(CliTest, ExpandRejectsNonPolynomialModels) {
  const PolyBlockSpec spec{.variant = Variant::kCcp, .order = 2, .rank = 2, .input_dim = 2, .output_dim = 1,
                           .stabilizer = Stabilizer::kTanh};
  const fs::path ckpt = save_net(ProductNet({{spec, init_params(spec, 0)}}), "tanh.pinet");
  EXPECT_EQ(run_cli({"expand", ckpt.string(), "--output-dir", (dir_ / "exp").string()}).code, kUsageError);
}

TEST_F(CliTest, DegreeOfAProductMatchesTheDeclaredDegree) {
  const PolyBlockSpec a{.variant = Variant::kNcp, .order = 2, .rank = 3, .input_dim = 2, .output_dim = 2};
  const PolyBlockSpec b{.variant = Variant::kCcp, .order = 3, .rank = 3, .input_dim = 2, .output_dim = 1};
  const fs::path ckpt = save_net(ProductNet({{a, init_params(a, 1, InitScheme::kGaussian)},
                                             {b, init_params(b, 2, InitScheme::kGaussian)}}),
                                 "product.pinet");
  const auto r = run_cli({"degree", ckpt.string()});
  EXPECT_EQ(r.code, kSuccess) << r.out;
  EXPECT_NE(r.out.find("declared total_degree 6"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("output y1: degree 6"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("realised degree 6 matches declared 6"), std::string::npos) << r.out;
}

TEST_F(CliTest, DegreeFlagsTanhStabilizedModelsAsNonPolynomial) {
  const PolyBlockSpec spec{.variant = Variant::kCcp, .order = 3, .rank = 2, .input_dim = 2, .output_dim = 1,
                           .stabilizer = Stabilizer::kTanh};
  const fs::path ckpt = save_net(ProductNet({{spec, init_params(spec, 0, InitScheme::kGaussian)}}), "t.pinet");
  const auto r = run_cli({"degree", ckpt.string()});
  EXPECT_EQ(r.code, kSuccess);
  EXPECT_NE(r.out.find("exceeds max"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("non-polynomial"), std::string::npos) << r.out;
}

TEST_F(CliTest, DegreeMismatchOnAPolynomialModelExitsOne) {
  // A degenerate block (U2 = 0) realises degree 1 while declaring 2.
  const PolyBlockSpec spec{.variant = Variant::kCcp, .order = 2, .rank = 2, .input_dim = 2, .output_dim = 1};
  PolyBlockParams p = init_params(spec, 0, InitScheme::kGaussian);
  p.get("U2") = Tensor::zeros(p.get("U2").shape());
  const auto r = run_cli({"degree", save_net(ProductNet({{spec, p}}), "flat.pinet").string()});
  EXPECT_EQ(r.code, kCheckFailed);
  EXPECT_NE(r.out.find("differs from declared 2"), std::string::npos) << r.out;
}

TEST_F(CliTest, VerifyRestrictedToOrderOnePasses) {
  const auto r = run_cli({"verify", "--set", "oracle_grid.orders=[1]", "--set", "degree_law.max_blocks=1",
                          "--set", "grad_check.instances=10", "--output-dir", (dir_ / "v").string()});
  EXPECT_EQ(r.code, kSuccess) << r.out << r.err;
  EXPECT_NE(r.out.find("PASS oracle-grid"), std::string::npos);
  const json report = json::parse(read_text_file(dir_ / "v" / "verify-report.json"));
  EXPECT_TRUE(report["passed"].get<bool>());
  EXPECT_EQ(report["suites"].size(), 3u);
  EXPECT_TRUE(fs::exists(dir_ / "v" / "verify-report.txt"));
  EXPECT_TRUE(fs::exists(dir_ / "v" / "resolved_config.json"));
}

TEST_F(CliTest, VerifyFailsOnAnImpossibleTolerance) {
  const auto r = run_cli({"verify", "--set", "oracle_grid.orders=[2]", "--set", "oracle_grid.tolerance=1e-300",
                          "--set", "degree_law.enabled=false", "--set", "grad_check.enabled=false",
                          "--output-dir", (dir_ / "v").string()});
  EXPECT_EQ(r.code, kCheckFailed);
  EXPECT_NE(r.out.find("FAIL oracle-grid"), std::string::npos);
}

TEST_F(CliTest, VerifyCatchesAFlippedCheckpointByte) {
  const PolyBlockSpec spec{.variant = Variant::kNcpSkip, .order = 2, .rank = 2, .input_dim = 2, .output_dim = 2};
  const fs::path ckpt = save_net(ProductNet({{spec, init_params(spec, 0, InitScheme::kGaussian)}}), "m.pinet");
  const std::vector<std::string> only_checkpoint = {"--set", "oracle_grid.enabled=false", "--set",
                                                    "degree_law.enabled=false", "--set", "grad_check.enabled=false",
                                                    "--output-dir", (dir_ / "v").string()};
  auto args = only_checkpoint;
  args.insert(args.begin(), {"verify", "--checkpoint", ckpt.string()});
  EXPECT_EQ(run_cli(args).code, kSuccess);

  auto bytes = read_file(ckpt);
  bytes[bytes.size() / 2] ^= 0x04;
  write_file_atomic(ckpt, bytes);
  EXPECT_EQ(run_cli(args).code, kCheckFailed);

  bytes.resize(30);
  write_file_atomic(ckpt, bytes);
  const auto truncated = run_cli(args);
  EXPECT_EQ(truncated.code, kCheckFailed);
  EXPECT_NE(truncated.out.find("failed decode"), std::string::npos) << truncated.out;
}

}  // namespace
}  // namespace pinet::cli
