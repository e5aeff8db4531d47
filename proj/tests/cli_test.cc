// Copyright 2026 The Expdiag Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "cli.h"

#include <filesystem>
#include <sstream>

#include <gtest/gtest.h>

#include "expdiag/datamodel.h"
#include "expdiag/event_io.h"
#include "json.hpp"

namespace expdiag::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Outcome {
  int code = 0;
  std::string out;
  std::string err;
};

Outcome Call(const std::vector<std::string>& args) {
  std::ostringstream out;
  std::ostringstream err;
  Outcome o;
  o.code = Run(args, out, err);
  o.out = out.str();
  o.err = err.str();
  return o;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("expdiag_cli_" +
            std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string Path(const std::string& name) const { return (dir_ / name).string(); }

  // Writes a scenario spec and simulates it into `name`.
  std::string Simulated(const std::string& name, const json& spec) {
    const std::string spec_path = Path(name + ".json");
    WriteFile(spec_path, spec.dump());
    const auto o = Call({"simulate", spec_path, "--out", Path(name)});
    EXPECT_EQ(o.code, kExitOk) << o.err;
    return Path(name);
  }

  fs::path dir_;
};

TEST_F(CliTest, MissingConfigIsAStructuredError) {
  const auto o = Call({"analyze", Path("none.jsonl"), "--config", Path("none.json")});
  EXPECT_EQ(o.code, kExitError);
  const json e = json::parse(o.err);
  EXPECT_EQ(e["error"]["code"], "not_found");
  EXPECT_FALSE(e["error"]["message"].get<std::string>().empty());
  EXPECT_TRUE(o.out.empty());
}

TEST_F(CliTest, BadArgumentsExitTwo) {
  EXPECT_EQ(Call({}).code, kExitError);
  EXPECT_EQ(Call({"frobnicate"}).code, kExitError);
  const auto o = Call({"analyze"});
  EXPECT_EQ(o.code, kExitError);
  EXPECT_EQ(json::parse(o.err)["error"]["code"], "invalid_argument");
  EXPECT_EQ(Call({"--version"}).code, kExitOk);
}

TEST_F(CliTest, AnalyzeReportShape) {
  const auto d = Simulated("clean", {{"kind", "clean"}, {"seed", 3}, {"n_users", 3000}});
  const auto o = Call({"analyze", d + "/events.jsonl", "--config", d + "/config.json",
                       "--plot-dir", Path("plots")});
  ASSERT_EQ(o.code, kExitOk) << o.err;
  const json r = json::parse(o.out);
  EXPECT_EQ(r["schema_version"], kReportSchemaVersion);
  EXPECT_EQ(r["report"], "analyze");
  const json& m = r["manifest"];
  EXPECT_EQ(m["command"], "analyze");
  int events_inputs = 0;
  for (const auto& in : m["inputs"]) {
    EXPECT_EQ(in["sha256"].get<std::string>().size(), 64u);
    if (in["role"] == "events") {
      ++events_inputs;
      EXPECT_EQ(in["sha256"], FileDigest(d + "/events.jsonl"));
    }
  }
  EXPECT_EQ(events_inputs, 1);
  ASSERT_FALSE(r["result"]["metrics"].empty());
  for (const auto& metric : r["result"]["metrics"]) {
    EXPECT_TRUE(metric.contains("coverage"));
    EXPECT_TRUE(metric["cross_day"].contains("lift"));
  }
  EXPECT_TRUE(fs::exists(Path("plots") + "/lifts.tsv"));
}

TEST_F(CliTest, RerunsAreByteIdentical) {
  const json spec = {{"kind", "cool_off_bug"}, {"seed", 5}, {"n_users", 4000}};
  const auto a = Simulated("a", spec);
  const auto b = Simulated("b", spec);
  for (const char* f : {"events.jsonl", "config.json", "truth.json"}) {
    EXPECT_EQ(FileDigest(a + "/" + f), FileDigest(b + "/" + f)) << f;
  }
  const std::vector<std::string> args = {"diagnose", a + "/events.jsonl",
                                         "--config", a + "/config.json"};
  const auto first = Call(args);
  const auto second = Call(args);
  EXPECT_NE(first.code, kExitError) << first.err;
  EXPECT_EQ(first.code, second.code);
  EXPECT_EQ(first.out, second.out);
  // --out writes the same bytes as stdout.
  auto with_out = args;
  with_out.push_back("--out");
  with_out.push_back(Path("report.json"));
  EXPECT_EQ(Call(with_out).code, first.code);
  EXPECT_EQ(ReadFile(Path("report.json")), first.out);
}

TEST_F(CliTest, DiagnoseFlagsMismatch) {
  const auto d = Simulated(
      "dyn", {{"kind", "dynamic_targeting"}, {"seed", 2}, {"n_users", 30000}});
  const auto o = Call({"diagnose", d + "/events.jsonl", "--config", d + "/config.json"});
  ASSERT_EQ(o.code, kExitFlagged) << o.err;
  const json r = json::parse(o.out);
  EXPECT_EQ(r["result"]["hypotheses"][0]["label"], "DynamicTargeting");
}

TEST_F(CliTest, SiblingWithDifferentHashIsRejected) {
  const auto d = Simulated(
      "dep", {{"kind", "dependent_experiments"}, {"seed", 4}, {"n_users", 3000}});
  ExperimentConfig sib = LoadConfig(d + "/sibling_config.json");
  sib.hash_id = "another_hash";
  SaveConfig(sib, Path("other_config.json"));
  const auto o = Call({"diagnose", d + "/events.jsonl", "--config", d + "/config.json",
                       "--sibling", d + "/sibling_events.jsonl", "--sibling-config",
                       Path("other_config.json")});
  EXPECT_EQ(o.code, kExitError);
  EXPECT_EQ(json::parse(o.err)["error"]["code"], "invalid_argument");

  const auto unmatched = Call({"diagnose", d + "/events.jsonl", "--config",
                               d + "/config.json", "--sibling",
                               d + "/sibling_events.jsonl"});
  EXPECT_EQ(unmatched.code, kExitError);
}

TEST_F(CliTest, TemporalSkipsShortRuns) {
  const auto d = Simulated(
      "short", {{"kind", "clean"}, {"seed", 1}, {"n_users", 2000}, {"k_days", 4}});
  const auto o = Call({"temporal", d + "/events.jsonl", "--config", d + "/config.json",
                       "--metric", "page_views"});
  ASSERT_EQ(o.code, kExitOk) << o.err;
  const json r = json::parse(o.out);
  EXPECT_TRUE(r["result"]["novelty"].contains("skipped"));
  EXPECT_TRUE(r["result"]["trigger_day"].contains("delta_i") ||
              r["result"]["trigger_day"].contains("skipped"));
}

TEST_F(CliTest, MetaRefusesEmptyHistory) {
  const auto d = Simulated("corpus", {{"kind", "corpus"},
                                      {"seed", 2},
                                      {"m", 8},
                                      {"min_users", 1000},
                                      {"max_users", 2000}});
  EXPECT_TRUE(fs::exists(d + "/store.bin"));
  const auto o = Call({"meta", d, "--pair", "sessions,bookings", "--n-sim", "20000"});
  ASSERT_EQ(o.code, kExitOk) << o.err;
  const json r = json::parse(o.out);
  EXPECT_EQ(r["result"]["records"], 8);
  EXPECT_TRUE(r["result"]["delta_relation"].contains("refused"));
  EXPECT_TRUE(r["result"]["comovement"].contains("refused"));

  EXPECT_EQ(Call({"meta", d, "--pair", "sessions"}).code, kExitError);
  const auto missing = Call({"meta", Path("nowhere"), "--pair", "a,b", "--rho", "0.1"});
  EXPECT_EQ(missing.code, kExitError);
}

TEST_F(CliTest, SimulateRejectsMalformedSpec) {
  WriteFile(Path("bad.json"), "{not json");
  const auto o = Call({"simulate", Path("bad.json"), "--out", Path("x")});
  EXPECT_EQ(o.code, kExitError);
  EXPECT_EQ(json::parse(o.err)["error"]["code"], "parse_error");
}

}  // namespace
}  // namespace expdiag::cli
