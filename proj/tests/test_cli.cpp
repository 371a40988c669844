#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "cli.hpp"
#include "ctrace/weights_io.hpp"

namespace ctrace::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("ctrace_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path gen(std::vector<std::string> extra = {}) {
    const fs::path out = dir_ / "bundle";
    std::vector<std::string> args{"oracle", "gen", "--output-dir", out.string(), "--samples", "8"};
    args.insert(args.end(), extra.begin(), extra.end());
    const Outcome o = run(args);
    EXPECT_EQ(o.code, 0) << o.err;
    return out;
  }

  fs::path dir_;
};

TEST_F(CliTest, OracleGenWritesBundle) {
  const fs::path b = gen({"--layers", "3", "--copy-block", "1"});
  EXPECT_TRUE(fs::exists(b / "model.ctw"));
  EXPECT_TRUE(fs::exists(b / "dataset.jsonl"));
  const json manifest = json::parse(slurp(b / "manifest.json"));
  EXPECT_EQ(manifest.at("spec").at("n_layers"), 3);
  EXPECT_EQ(load_model(b / "model.ctw").config().n_layers, 3u);
}

TEST_F(CliTest, CopyBlockBeyondLayersIsInvalidSpec) {
  const Outcome o = run({"oracle", "gen", "--output-dir", (dir_ / "x").string(), "--layers", "2", "--copy-block", "3"});
  EXPECT_EQ(o.code, kExitInvalidSpec);
  EXPECT_NE(o.err.find("copy block"), std::string::npos);
}

TEST_F(CliTest, LayerSweepOutputsAndRerunIsByteIdentical) {
  const fs::path b = gen();
  auto sweep = [&](const std::string& name, const std::string& workers) {
    return run({"sweep", "--model", (b / "model.ctw").string(), "--dataset", (b / "dataset.jsonl").string(),
                "--output-dir", (dir_ / name).string(), "--kind", "layers", "--workers", workers});
  };
  const Outcome first = sweep("r1", "1");
  ASSERT_EQ(first.code, 0) << first.err;
  EXPECT_EQ(sweep("r2", "4").code, 0);
  for (const char* f : {"results.json", "results.csv", "layers.svg", "layers_heatmap.svg"}) {
    SCOPED_TRACE(f);
    ASSERT_TRUE(fs::exists(dir_ / "r1" / f));
    EXPECT_EQ(slurp(dir_ / "r1" / f), slurp(dir_ / "r2" / f));
  }
  const json doc = json::parse(slurp(dir_ / "r1" / "results.json"));
  EXPECT_EQ(doc.at("sweep_kind"), "layers");
  EXPECT_EQ(doc.at("n_valid"), 8);
  EXPECT_FALSE(doc.at("options").contains("workers"));
  const auto mean = doc.at("mean_rr").get<std::vector<double>>();
  ASSERT_EQ(mean.size(), 5u);
  EXPECT_NEAR(mean[1], 0.0, 1e-9);
  EXPECT_NEAR(mean[2], 1.0, 1e-9);
  EXPECT_NE(first.out.find("site"), std::string::npos);
}

TEST_F(CliTest, ConfigFileWithFlagOverride) {
  const fs::path b = gen();
  const json cfg{{"model_path", (b / "model.ctw").string()},
                 {"dataset_path", (b / "dataset.jsonl").string()},
                 {"output_dir", (dir_ / "from_config").string()},
                 {"sweep_kind", "tokens"},
                 {"sites", {2}}};
  std::ofstream(dir_ / "run.json") << cfg.dump();
  Outcome o = run({"sweep", "--config", (dir_ / "run.json").string()});
  ASSERT_EQ(o.code, 0) << o.err;
  json doc = json::parse(slurp(dir_ / "from_config" / "results.json"));
  EXPECT_EQ(doc.at("sweep_kind"), "tokens");
  EXPECT_EQ(doc.at("sites"), json::array({2}));

  o = run({"sweep", "--config", (dir_ / "run.json").string(), "--sites", "0,4", "--output-dir",
           (dir_ / "override").string()});
  ASSERT_EQ(o.code, 0) << o.err;
  doc = json::parse(slurp(dir_ / "override" / "results.json"));
  EXPECT_EQ(doc.at("sites"), json::array({0, 4}));
}

TEST_F(CliTest, ReportRerendersIdenticalFigures) {
  const fs::path b = gen();
  ASSERT_EQ(run({"sweep", "--model", (b / "model.ctw").string(), "--dataset", (b / "dataset.jsonl").string(),
                 "--output-dir", (dir_ / "s").string(), "--kind", "tokens"})
                .code,
            0);
  const Outcome o = run({"report", "--results", (dir_ / "s" / "results.json").string(), "--output-dir",
                         (dir_ / "rep").string()});
  ASSERT_EQ(o.code, 0) << o.err;
  for (const char* f : {"results.csv", "tokens_positions.svg", "tokens_segments_mean.svg"})
    EXPECT_EQ(slurp(dir_ / "s" / f), slurp(dir_ / "rep" / f)) << f;
}

TEST_F(CliTest, RunPrintsTraceResult) {
  const fs::path b = gen();
  const Outcome o = run({"run", "--model", (b / "model.ctw").string(), "--dataset", (b / "dataset.jsonl").string(),
                         "--patch", "2:12"});
  ASSERT_EQ(o.code, 0) << o.err;
  const json r = json::parse(o.out);
  EXPECT_EQ(r.at("verdict"), "valid");
  EXPECT_NEAR(r.at("rr").get<double>(), 1.0, 1e-9);

  const Outcome layer = run({"run", "--model", (b / "model.ctw").string(), "--dataset",
                             (b / "dataset.jsonl").string(), "--sample-id", "oracle-000003", "--layer-site", "1"});
  ASSERT_EQ(layer.code, 0) << layer.err;
  EXPECT_NEAR(json::parse(layer.out).at("rr").get<double>(), 0.0, 1e-9);

  EXPECT_EQ(run({"run", "--model", (b / "model.ctw").string(), "--dataset", (b / "dataset.jsonl").string(),
                 "--patch", "9:0"})
                .code,
            kExitShape);
}

TEST_F(CliTest, ErrorExitCodes) {
  const fs::path b = gen();
  const std::string missing = (dir_ / "nope.ctw").string();
  Outcome o = run({"sweep", "--model", missing, "--dataset", (b / "dataset.jsonl").string(), "--output-dir",
                   (dir_ / "o").string()});
  EXPECT_EQ(o.code, kExitIo);
  EXPECT_NE(o.err.find(missing), std::string::npos);

  std::ofstream(dir_ / "bad.ctw") << "garbage";
  o = run({"sweep", "--model", (dir_ / "bad.ctw").string(), "--dataset", (b / "dataset.jsonl").string(),
           "--output-dir", (dir_ / "o").string()});
  EXPECT_EQ(o.code, kExitFormat);

  std::ofstream(dir_ / "bad.jsonl") << "{\"kind\":\"header\",\"d_audio\":4}\n{\"id\":1}\n";
  o = run({"sweep", "--model", (b / "model.ctw").string(), "--dataset", (dir_ / "bad.jsonl").string(),
           "--output-dir", (dir_ / "o").string()});
  EXPECT_EQ(o.code, kExitFormat);
  EXPECT_NE(o.err.find("line 2"), std::string::npos);

  o = run({"sweep", "--model", (b / "model.ctw").string(), "--dataset", (b / "dataset.jsonl").string(),
           "--output-dir", (dir_ / "o").string(), "--kind", "layers", "--sites", "1"});
  EXPECT_EQ(o.code, kExitInvalidSpec);

  o = run({"sweep", "--model", (b / "model.ctw").string(), "--dataset", (b / "dataset.jsonl").string(),
           "--output-dir", (dir_ / "o").string(), "--silence", "1,2"});
  EXPECT_EQ(o.code, kExitShape);

  EXPECT_EQ(run({"sweep", "--bogus"}).code, kExitUsage);
  EXPECT_EQ(run({}).code, kExitUsage);
  EXPECT_EQ(run({"--help"}).code, kExitOk);
}

TEST_F(CliTest, AllExcludedExitsWithNoValidSamples) {
  const fs::path b = gen();
  std::string text = slurp(b / "dataset.jsonl");
  // Retarget every sample at token 0, which the clean run never predicts.
  for (std::size_t p = text.find("\"target_token\":"); p != std::string::npos;
       p = text.find("\"target_token\":", p + 1)) {
    const std::size_t start = p + 15;
    const std::size_t end = text.find_first_of(",}", start);
    text.replace(start, end - start, "0");
  }
  std::ofstream(dir_ / "wrong.jsonl") << text;
  const Outcome o = run({"sweep", "--model", (b / "model.ctw").string(), "--dataset",
                         (dir_ / "wrong.jsonl").string(), "--output-dir", (dir_ / "o").string()});
  EXPECT_EQ(o.code, kExitNoValidSamples);
  EXPECT_NE(o.err.find("8"), std::string::npos);
}

TEST_F(CliTest, ExecutableExitStatus) {
  const std::string cmd = std::string(CTRACE_TRACE_BINARY) + " oracle gen --output-dir " +
                          (dir_ / "exe").string() + " --layers 2 --copy-block 3 > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  ASSERT_TRUE(WIFEXITED(status));
  EXPECT_EQ(WEXITSTATUS(status), kExitInvalidSpec);
}

}  // namespace
}  // namespace ctrace::cli
