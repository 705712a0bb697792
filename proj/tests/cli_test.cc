// tests/cli_test.cc
//
// Copyright 2026 The sctc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "sctc/cli.h"

namespace sctc {
namespace {

namespace fs = std::filesystem;

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = slurp(e.path());
  }
  return out;
}

class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = fs::temp_directory_path() / "sctc_cli_test";
    fs::remove_all(root_);
    fs::create_directories(root_);
    std::ofstream(root_ / "spec.txt") << "data.train_count = 12\ndata.dev_count = 4\ndata.test_count = 4\n"
                                         "data.feat_dim = 8\ndata.seed = 3\n";
    ASSERT_EQ(run({"gen-data", "--spec", (root_ / "spec.txt").string(), "--out", data().string()}).code, 0);
  }
  static void TearDownTestSuite() { fs::remove_all(root_); }

  static fs::path data() { return root_ / "data"; }

  static fs::path write_config(const std::string& name, const std::string& mode) {
    const fs::path p = root_ / (name + ".txt");
    std::ofstream(p) << "data_dir = " << data().string() << "\nmodel.layers = 2\nmodel.dim = 16\nmodel.heads = 2\n"
                     << "model.inter_k = 1\nmodel.mode = " << mode << "\ntrain.epochs = 2\ntrain.batch_size = 4\n"
                     << "train.warmup = 10\ntrain.average_top = 2\n";
    return p;
  }

  static fs::path train(const std::string& name, const std::string& mode) {
    const fs::path out = root_ / ("run_" + name);
    if (!fs::exists(out / "model.sctc")) {
      const Result r = run({"train", "--config", write_config(name, mode).string(), "--out", out.string()});
      EXPECT_EQ(r.code, 0) << r.err;
    }
    return out;
  }

  static fs::path root_;
};

fs::path CliTest::root_;

TEST_F(CliTest, TrainDecodeScoreEndToEnd) {
  const auto before = tree(data());
  const fs::path run_dir = train("plain", "plain-ctc");
  EXPECT_TRUE(fs::exists(run_dir / "metrics.jsonl"));
  EXPECT_TRUE(fs::exists(run_dir / "config.txt"));
  EXPECT_TRUE(fs::exists(run_dir / "model.sctc"));
  // Every metrics line is a JSON object; step lines carry the loss split.
  std::ifstream metrics(run_dir / "metrics.jsonl");
  std::size_t steps = 0;
  for (std::string line; std::getline(metrics, line);) {
    const auto j = nlohmann::json::parse(line);
    if (j.contains("step")) {
      ++steps;
      EXPECT_TRUE(j.contains("lr"));
      EXPECT_TRUE(j.contains("final_ctc"));
    }
  }
  EXPECT_GT(steps, 0u);

  const fs::path dec = root_ / "decoded";
  Result r = run({"decode", "--model", (run_dir / "model.sctc").string(), "--data", data().string(), "--split",
                  "dev", "--out", dec.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  ASSERT_TRUE(fs::exists(dec / "dev.hyp"));
  r = run({"score", "--hyp", (dec / "dev.hyp").string(), "--ref", (data() / "dev.tsv").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("\"id\""), std::string::npos);
  r = run({"score", "--hyp", (dec / "dev.hyp").string(), "--ref", (data() / "dev.tsv").string(), "--out",
           (root_ / "scored").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(root_ / "scored" / "score.txt"));
  EXPECT_TRUE(fs::exists(root_ / "scored" / "score.jsonl"));
  // Nothing was written into the dataset directory.
  EXPECT_EQ(tree(data()), before);
}

TEST_F(CliTest, ResolvedConfigReproducesRun) {
  const fs::path run_dir = train("selfcond", "selfcond");
  const fs::path again = root_ / "rerun";
  const Result r = run({"train", "--config", (run_dir / "config.txt").string(), "--out", again.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(slurp(run_dir / "model.sctc"), slurp(again / "model.sctc"));
}

TEST_F(CliTest, InspectPlainModelFails) {
  const fs::path run_dir = train("plain", "plain-ctc");
  const Result r = run({"inspect", "--model", (run_dir / "model.sctc").string(), "--utt", "dev-00000"});
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("intermediate"), std::string::npos) << r.err;
}

TEST_F(CliTest, InspectSelfCondModel) {
  const fs::path run_dir = train("selfcond", "selfcond");
  const Result r = run({"inspect", "--model", (run_dir / "model.sctc").string(), "--utt", "dev-00001"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("layer   1:"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("layer   2:"), std::string::npos) << r.out;
  const Result missing = run({"inspect", "--model", (run_dir / "model.sctc").string(), "--utt", "nope"});
  EXPECT_EQ(missing.code, 1);
  EXPECT_NE(missing.err.find("nope"), std::string::npos);
}

TEST_F(CliTest, LatencyReportsRatio) {
  const fs::path plain = train("plain", "plain-ctc");
  const fs::path self = train("selfcond", "selfcond");
  const Result r = run({"latency", "--model", (self / "model.sctc").string(), "--baseline",
                        (plain / "model.sctc").string(), "--data", data().string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("overhead ratio"), std::string::npos) << r.out;
}

TEST_F(CliTest, GenDataIsByteIdentical) {
  const fs::path again = root_ / "data_again";
  ASSERT_EQ(run({"gen-data", "--spec", (root_ / "spec.txt").string(), "--out", again.string()}).code, 0);
  EXPECT_EQ(tree(data()), tree(again));
}

TEST_F(CliTest, DistinctDiagnostics) {
  std::ofstream(root_ / "unknown.txt") << "data_dir = " << data().string() << "\nmodel.layerz = 3\n";
  Result r = run({"train", "--config", (root_ / "unknown.txt").string(), "--out", (root_ / "x").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("model.layerz"), std::string::npos) << r.err;

  std::ofstream(root_ / "malformed.txt") << "data_dir = " << data().string() << "\nthis line is wrong\n";
  r = run({"train", "--config", (root_ / "malformed.txt").string(), "--out", (root_ / "x").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find(":2"), std::string::npos) << r.err;

  std::ofstream(root_ / "badk.txt") << "data_dir = " << data().string() << "\nmodel.layers = 2\nmodel.inter_k = 2\n";
  r = run({"train", "--config", (root_ / "badk.txt").string(), "--out", (root_ / "x").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("inter_k"), std::string::npos) << r.err;

  r = run({"decode", "--model", (root_ / "absent.sctc").string(), "--data", data().string(), "--split", "dev"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("absent.sctc"), std::string::npos) << r.err;

  r = run({"decode", "--model", "m"});
  EXPECT_EQ(r.code, 2);
  r = run({});
  EXPECT_EQ(r.code, 2);
  r = run({"frobnicate"});
  EXPECT_EQ(r.code, 2);
}

TEST_F(CliTest, DefaultsListEveryKey) {
  const Result r = run({"defaults"});
  ASSERT_EQ(r.code, 0);
  for (const char* key : {"data_dir", "model.layers", "model.lambda", "model.mode", "train.warmup",
                          "train.average_top", "data.sigma", "data.rule"}) {
    EXPECT_NE(r.out.find(key), std::string::npos) << key;
  }
}

TEST_F(CliTest, BinaryExitStatus) {
  const std::string cmd = std::string(SCTC_CLI_PATH) + " inspect --model " +
                          (train("plain", "plain-ctc") / "model.sctc").string() + " --utt dev-00000 2>" +
                          (root_ / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  EXPECT_NE(status, 0);
  const std::string err = slurp(root_ / "stderr.txt");
  EXPECT_EQ(std::count(err.begin(), err.end(), '\n'), 1) << err;
}

}  // namespace
}  // namespace sctc
