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

#include "expdiag/datamodel.h"

#include <algorithm>
#include <filesystem>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "expdiag/event_io.h"
#include "expdiag/rng.h"
#include "expdiag/store.h"
#include "test_util.h"

namespace expdiag {
namespace {

namespace fs = std::filesystem;

TEST(DayRangeTest, ParseAndValidate) {
  EXPECT_EQ(ParseDayRange("3,9"), (DayRange{3, 9}));
  EXPECT_EQ(ParseDayRange(" 4 "), (DayRange{4, 4}));
  EXPECT_EQ(ParseDayRange("2,5").length(), 4);
  EXPECT_EQ(ParseDayRange("2,5").ToString(), "[2,5]");
  ExpectErrorCode([] { ParseDayRange("5,2"); }, ErrorCode::kInvalidArgument);
  ExpectErrorCode([] { ParseDayRange("0,2"); }, ErrorCode::kInvalidArgument);
  ExpectErrorCode([] { ParseDayRange("a,2"); }, ErrorCode::kParse);
}

TEST(ConfigTest, Validation) {
  ExperimentConfig c = TwoArmConfig();
  EXPECT_NO_THROW(c.Validate());
  c.variants[0].fraction = 0.6;
  ExpectErrorCode([&] { c.Validate(); }, ErrorCode::kInvalidArgument);
  c = TwoArmConfig();
  c.variants.pop_back();
  ExpectErrorCode([&] { c.Validate(); }, ErrorCode::kInvalidArgument);
  c = TwoArmConfig();
  c.start_weekday = "funday";
  ExpectErrorCode([&] { c.Validate(); }, ErrorCode::kInvalidArgument);
  c = TwoArmConfig();
  c.count_from_day = 3;
  c.end_day = 2;
  ExpectErrorCode([&] { c.Validate(); }, ErrorCode::kInvalidArgument);
}

TEST(ConfigTest, JsonRoundTrip) {
  ExperimentConfig c = TwoArmConfig();
  c.count_from_day = 3;
  c.end_day = 14;
  c.start_weekday = "sat";
  c.target_membership = std::map<int, std::vector<std::string>>{
      {1, {"a", "b"}}, {2, {"b"}}};
  EXPECT_EQ(ConfigFromJson(ConfigToJson(c)), c);
  ExpectErrorCode([] { ConfigFromJson(nlohmann::json::object()); },
                  ErrorCode::kParse);
}

TEST(AssignVariantTest, DeterministicAndProportional) {
  ExperimentConfig c = TwoArmConfig();
  c.variants = {{"control", 0.7}, {"treatment", 0.3}};
  int treated = 0;
  const int n = 40000;
  for (int i = 0; i < n; ++i) {
    const std::string id = "u" + std::to_string(i);
    const int v = AssignVariant(c, id);
    EXPECT_EQ(v, AssignVariant(c, id));
    treated += v;
  }
  // Binomial sd is about 0.0023.
  EXPECT_NEAR(treated / static_cast<double>(n), 0.3, 0.012);
  // Another hash id reshuffles users.
  ExperimentConfig other = c;
  other.hash_id = "other";
  int moved = 0;
  for (int i = 0; i < 2000; ++i) {
    const std::string id = "u" + std::to_string(i);
    moved += AssignVariant(c, id) != AssignVariant(other, id);
  }
  EXPECT_GT(moved, 500);
}

TEST(IngestTest, IndexesAndSumsPerDay) {
  std::vector<Event> events = {
      Exposure("b", 2, "treatment"), Exposure("a", 1, "control"),
      Exposure("a", 3, "control"),   Exposure("a", 1, "control"),
      Metric("a", 1, "clicks", 2.0), Metric("a", 1, "clicks", 3.0),
      Metric("b", 4, "views", 1.5),  Metric("c", 2, "views", 1.0),
  };
  const IngestedLog log = Ingest(events, TwoArmConfig());
  ASSERT_EQ(log.user_count(), 3u);
  EXPECT_EQ(log.user_id(0), "a");
  const UserIndex a = *log.FindUser("a");
  const UserIndex b = *log.FindUser("b");
  const UserIndex c = *log.FindUser("c");
  EXPECT_EQ(log.variant(a), 0);
  EXPECT_EQ(log.variant(b), 1);
  EXPECT_EQ(log.variant(c), AssignVariant(TwoArmConfig(), "c"));
  EXPECT_EQ(std::vector<int32_t>(log.trigger_days(a).begin(),
                                 log.trigger_days(a).end()),
            (std::vector<int32_t>{1, 3}));
  EXPECT_FALSE(log.exposed(c));
  EXPECT_EQ(log.exposed_user_count(), 2);
  EXPECT_TRUE(log.TriggeredIn(a, {2, 3}));
  EXPECT_FALSE(log.TriggeredIn(a, {2, 2}));
  const int clicks = log.MetricIndex("clicks");
  ASSERT_EQ(log.metric_cells(clicks, a).size(), 1u);
  EXPECT_EQ(log.metric_cells(clicks, a)[0].value, 5.0);
  EXPECT_EQ(log.last_day(), 4);
  EXPECT_EQ(log.exposure_event_count(), 4);
  ExpectErrorCode([&] { log.MetricIndex("nope"); }, ErrorCode::kNotFound);
}

TEST(IngestTest, OrderIndependent) {
  std::vector<Event> events;
  std::mt19937_64 rng(1);
  for (int i = 0; i < 200; ++i) {
    const std::string u = "u" + std::to_string(i % 37);
    const std::string v =
        AssignVariant(TwoArmConfig(), u) == 0 ? "control" : "treatment";
    events.push_back(Exposure(u, 1 + i % 5, v));
    events.push_back(Metric(u, 1 + i % 7, "m", 0.1 * i));
  }
  const IngestedLog a = Ingest(events, TwoArmConfig());
  std::shuffle(events.begin(), events.end(), rng);
  const IngestedLog b = Ingest(events, TwoArmConfig());
  EXPECT_TRUE(a == b);
}

TEST(IngestTest, Rejections) {
  const ExperimentConfig c = TwoArmConfig();
  auto reject = [&](std::vector<Event> events) {
    ExpectErrorCode([&] { Ingest(events, c); }, ErrorCode::kInvalidArgument);
  };
  reject({Exposure("a", 1, "control", "other")});
  reject({Exposure("a", 1, "ghost")});
  reject({Exposure("a", 1, "control"), Exposure("a", 2, "treatment")});
  reject({Metric("a", 0, "m", 1.0)});
  reject({Metric("a", 1, "m", std::nan(""))});
  ExperimentConfig bounded = c;
  bounded.end_day = 3;
  ExpectErrorCode([&] { Ingest(std::vector<Event>{Metric("a", 4, "m", 1)}, bounded); },
                  ErrorCode::kInvalidArgument);
}

TEST(EventIoTest, RoundTripAndErrors) {
  std::vector<Event> events = {Exposure("a", 1, "control"),
                               Metric("a", 2, "m", 0.25)};
  std::get<ExposureEvent>(events[0]).service_tag = "web";
  std::get<MetricEvent>(events[1]).source_tag = "tracker";
  std::stringstream ss;
  WriteEvents(ss, events);
  EXPECT_EQ(ParseEvents(ss), events);
  std::stringstream bad("{\"type\":\"exposure\"}\n");
  ExpectErrorCode([&] { ParseEvents(bad); }, ErrorCode::kParse);
  std::stringstream junk("not json\n");
  ExpectErrorCode([&] { ParseEvents(junk); }, ErrorCode::kParse);
  ExpectErrorCode([] { ReadEvents("/nonexistent/events.jsonl"); },
                  ErrorCode::kNotFound);
  ExpectErrorCode([] { LoadConfig("/nonexistent/config.json"); },
                  ErrorCode::kNotFound);
}

TEST(StoreTest, PersistRoundTripIsExact) {
  SummaryStore store;
  store.Add({"e@1", "control", "m", {1, 7}, 10, 0.1 + 0.2, 1.0 / 3.0});
  store.Add({"e@1", "treatment", "m", {1, 7}, 12, -5.5, 1e300});
  store.AddUserCount({"e@1", "control", {1, 7}}, 10);
  ExpectErrorCode(
      [&] { store.Add({"e@1", "control", "m", {1, 7}, 1, 0, 0}); },
      ErrorCode::kInvalidArgument);
  const fs::path path = fs::temp_directory_path() / "expdiag_store_test.bin";
  PersistStore(store, path);
  EXPECT_TRUE(LoadStore(path) == store);
  EXPECT_EQ(store.ExperimentIds(), std::vector<std::string>{"e@1"});
  ExpectErrorCode([&] { store.Get({"e@1", "x", "m", {1, 7}}); },
                  ErrorCode::kNotFound);

  WriteFile(path, "garbage that is long enough");
  ExpectErrorCode([&] { LoadStore(path); }, ErrorCode::kSchemaMismatch);
  fs::remove(path);
}

TEST(StoreTest, SummaryVariance) {
  const RangeSummary s = Summarize({1.0, 2.0, 3.0, 4.0});
  EXPECT_DOUBLE_EQ(s.mean(), 2.5);
  EXPECT_NEAR(s.variance(), 5.0 / 3.0, 1e-12);
  EXPECT_EQ(Summarize({1.0}).variance(), 0.0);
}

TEST(RngTest, KeyedStreamsAreStableAndDistinct) {
  auto a = KeyedEngine(1, 2);
  auto b = KeyedEngine(1, 2);
  auto c = KeyedEngine(1, 3);
  const auto x = a();
  EXPECT_EQ(x, b());
  EXPECT_NE(x, c());
  EXPECT_NE(StreamSeed(1, 2, 3), StreamSeed(1, 3, 2));
  EXPECT_EQ(HashString("abc"), HashString("abc"));
  EXPECT_GE(UnitInterval(~0ull), 0.0);
  EXPECT_LT(UnitInterval(~0ull), 1.0);
}

}  // namespace
}  // namespace expdiag
