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

#include "expdiag/metacorr.h"

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "expdiag/corpus.h"
#include "test_util.h"

namespace expdiag {
namespace {

RangeSummary Named(const std::vector<double>& values, const std::string& key,
                   const std::string& variant, const std::string& metric,
                   DayRange range) {
  RangeSummary s = Summarize(values);
  s.experiment_id = key;
  s.variant = variant;
  s.metric_id = metric;
  s.range = range;
  return s;
}

TEST(MetricRecordTest, MatchesDirectFormulas) {
  const std::vector<double> t = {3, 5, 4, 6, 8, 5, 7};
  const std::vector<double> c = {2, 4, 3, 5, 4, 3};
  auto mean = [](const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return s / v.size();
  };
  auto var = [&](const std::vector<double>& v) {
    const double m = mean(v);
    double s = 0;
    for (double x : v) s += (x - m) * (x - m);
    return s / (v.size() - 1);
  };
  const auto r = MakeMetricRecord(Summarize(t), Summarize(c));
  const double se = std::sqrt(var(t) / 7 + var(c) / 6);
  const double n_e = 1.0 / (1.0 / 7 + 1.0 / 6);
  EXPECT_NEAR(r.n_e, n_e, 1e-12);
  EXPECT_NEAR(r.delta_abs, mean(t) - mean(c), 1e-12);
  EXPECT_NEAR(r.delta_pct, mean(t) / mean(c) - 1, 1e-12);
  EXPECT_NEAR(r.sigma * r.sigma / r.n_e, se * se, 1e-12);
  EXPECT_NEAR(r.delta * std::sqrt(r.n_e), (mean(t) - mean(c)) / se, 1e-12);
  EXPECT_NEAR(r.p_value, std::erfc(std::abs(r.delta_abs / se) / std::sqrt(2.0)),
              1e-12);
  EXPECT_NEAR(r.mde_pct, (1.959963984540054 + 0.8416212335729143) * se / mean(c),
              1e-9);
  ExpectErrorCode([] { MakeMetricRecord(Summarize({1}), Summarize({1, 2})); },
                  ErrorCode::kInsufficientData);
  ExpectErrorCode([] { MakeMetricRecord(Summarize({1, 1}), Summarize({0, 0})); },
                  ErrorCode::kUndefined);
}

TEST(BuildHistoryTest, PicksLargestIterationAndLongestRange) {
  SummaryStore store;
  auto add = [&](const std::string& key, DayRange range, int n, double lift) {
    std::vector<double> c;
    std::vector<double> t;
    for (int i = 0; i < n; ++i) {
      c.push_back(1.0 + (i % 3));
      t.push_back((1.0 + (i % 3)) * (1.0 + lift));
    }
    store.Add(Named(c, key, "control", "m", range));
    store.Add(Named(t, key, "treatment", "m", range));
  };
  add("a@1", {1, 7}, 20, 0.1);
  add("a@1", {1, 14}, 30, 0.2);
  add("a@2", {1, 14}, 10, 0.3);
  add("b@1", {1, 3}, 30, 0.1);
  add("c", {1, 9}, 40, 0.05);
  const History h = BuildHistory(store, 7);
  ASSERT_EQ(h.records.size(), 2u);
  EXPECT_EQ(h.records[0].iteration, "a@1");
  EXPECT_EQ(h.records[0].experiment_id, "a");
  EXPECT_EQ(h.records[0].range, (DayRange{1, 14}));
  EXPECT_NEAR(h.records[0].Find("m")->delta_pct, 0.2, 1e-12);
  EXPECT_EQ(h.records[1].experiment_id, "c");
  ASSERT_EQ(h.excluded.size(), 1u);
  EXPECT_EQ(h.excluded[0].experiment_id, "b");
  EXPECT_EQ(BuildHistory(store, 2).records.size(), 3u);
  ExpectErrorCode([&] { RecordAt(store, "zzz", {1, 7}); }, ErrorCode::kNotFound);
}

ExperimentHistoryRecord Record(const std::string& id, double x_pct, double x_p,
                               double y_pct, double y_p) {
  ExperimentHistoryRecord r;
  r.experiment_id = id;
  r.iteration = id;
  r.range = {1, 14};
  r.run_days = 14;
  r.metrics["x"].delta_pct = x_pct;
  r.metrics["x"].p_value = x_p;
  r.metrics["y"].delta_pct = y_pct;
  r.metrics["y"].p_value = y_p;
  return r;
}

TEST(ComovementTest, CountsAgainstNull) {
  History h;
  for (int i = 0; i < 200; ++i) {
    const bool y_sig = i < 100;
    const bool x_sig = i < 40;
    h.records.push_back(Record("e" + std::to_string(i), 0.0, x_sig ? 0.001 : 0.5,
                               0.0, y_sig ? 0.001 : 0.5));
  }
  ComovementOptions options;
  const auto r = Comovement(h, "x", "y", 0.0, options);
  EXPECT_EQ(r.conditioning, 100);
  EXPECT_EQ(r.co_significant, 40);
  EXPECT_DOUBLE_EQ(r.observed, 0.4);
  EXPECT_NEAR(r.expected, 0.05, 0.01);
  EXPECT_TRUE(r.elevated);
  EXPECT_LT(r.p_value, 1e-6);
  // Identical metrics are co-significant by construction.
  const auto same = Comovement(h, "x", "y", 1.0, options);
  EXPECT_NEAR(same.expected, 1.0, 1e-12);
  EXPECT_FALSE(same.elevated);

  options.min_conditioning = 101;
  ExpectErrorCode([&] { Comovement(h, "x", "y", 0.0, options); },
                  ErrorCode::kInsufficientData);
  ExpectErrorCode([&] { Comovement(h, "x", "y", 1.5); },
                  ErrorCode::kInvalidArgument);
}

TEST(DeltaRelationTest, RecoversSlopeAndDropsOutlier) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> noise(0.0, 0.001);
  History h;
  for (int i = 0; i < 40; ++i) {
    const double x = 0.01 * (i - 20);
    h.records.push_back(Record("e" + std::to_string(i), x, 1e-6,
                               0.002 + 0.5 * x + noise(rng), 0.5));
  }
  for (int i = 0; i < 60; ++i) {
    h.records.push_back(
        Record("n" + std::to_string(i), 0.0, 0.2 + 0.01 * i, 0.0, 0.5));
  }
  h.records[5].metrics["y"].delta_pct += 0.2;
  const auto r = FitDeltaRelation(h, "x", "y");
  EXPECT_EQ(r.discoveries, 40);
  EXPECT_EQ(r.outliers, std::vector<std::string>{"e5"});
  EXPECT_EQ(r.points_used.size(), 39u);
  EXPECT_NEAR(r.beta1, 0.5, 0.01);
  EXPECT_NEAR(r.beta0, 0.002, 0.001);

  DeltaRelationOptions strict;
  strict.min_discoveries = 41;
  ExpectErrorCode([&] { FitDeltaRelation(h, "x", "y", strict); },
                  ErrorCode::kInsufficientData);
}

TEST(ConditionalsTest, Validation) {
  const auto u = Conditionals::Uninformative(0.2);
  EXPECT_DOUBLE_EQ(u.y1_given_x1(), 0.2);
  EXPECT_DOUBLE_EQ(u.y1_given_x0(), 0.2);
  EXPECT_NO_THROW(u.Validate());
  Conditionals bad;
  bad.p[0][0] = 0.7;
  ExpectErrorCode([&] { bad.Validate(); }, ErrorCode::kInvalidArgument);
}

TEST(EarlyIndicatorTest, UninformativeReducesToSingleMetric) {
  const TwoGroupPrior px{0.3, 1e-3};
  const TwoGroupPrior py{0.1, 4e-4};
  for (double dy : {-0.05, 0.0, 0.01, 0.03}) {
    EarlyIndicatorInput in;
    in.delta_x = 0.04;
    in.n_e_x = 5000;
    in.delta_y = dy;
    in.n_e_y_pred = 8000;
    in.prior_x = px;
    in.prior_y = py;
    in.conditionals = Conditionals::Uninformative(py.pi1);
    const auto r = EarlyIndicator(in);
    EXPECT_NEAR(r.posterior, SingleMetricPosterior(dy, 8000, py), 1e-12);
    EXPECT_NEAR(r.prior_y, py.pi1, 1e-12);
  }
}

TEST(EarlyIndicatorTest, ClosedFormPosterior) {
  const TwoGroupPrior p{0.25, 2e-3};
  const double delta = 0.03;
  const double n_e = 2000;
  auto density = [](double x, double v) {
    return std::exp(-x * x / (2 * v)) / std::sqrt(2 * M_PI * v);
  };
  const double f1 = density(delta, 1 / n_e + p.v_sq);
  const double f0 = density(delta, 1 / n_e);
  EXPECT_NEAR(SingleMetricPosterior(delta, n_e, p),
              p.pi1 * f1 / (p.pi1 * f1 + (1 - p.pi1) * f0), 1e-12);

  EarlyIndicatorInput in;
  in.delta_x = 0.1;
  in.n_e_x = 5000;
  in.delta_y = 0.02;
  in.n_e_y_pred = 9000;
  in.prior_x = {0.3, 1e-3};
  in.prior_y = {0.1, 4e-4};
  in.conditionals.p[1][1] = 0.8;
  in.conditionals.p[1][0] = 0.2;
  in.conditionals.p[0][1] = 0.02;
  in.conditionals.p[0][0] = 0.98;
  const auto r = EarlyIndicator(in);
  const double px = SingleMetricPosterior(in.delta_x, in.n_e_x, in.prior_x);
  const double prior_y = 0.02 + (0.8 - 0.02) * px;
  const double g1 = density(in.delta_y, 1 / in.n_e_y_pred + in.prior_y.v_sq);
  const double g0 = density(in.delta_y, 1 / in.n_e_y_pred);
  EXPECT_NEAR(r.posterior, prior_y * g1 / (prior_y * g1 + (1 - prior_y) * g0),
              1e-12);
  EXPECT_NEAR(r.likelihood_ratio, g1 / g0, 1e-9 * g1 / g0);
  EXPECT_EQ(r.flag, r.posterior > 0.6);

  in.n_e_x = 0;
  ExpectErrorCode([&] { EarlyIndicator(in); }, ErrorCode::kInvalidArgument);
}

TEST(ProjectNeTest, PowerLawAndClamp) {
  std::vector<double> ne;
  for (int d = 1; d <= 7; ++d) ne.push_back(1000.0 * std::pow(d, 0.5));
  EXPECT_NEAR(ProjectNe(ne, 30), 1000.0 * std::sqrt(30.0), 1e-6);
  // Shrinking N_e clamps to a flat projection.
  std::vector<double> down = {500, 400, 300, 200};
  const double flat = ProjectNe(down, 30);
  double geo = 0;
  for (double v : down) geo += std::log(v);
  EXPECT_NEAR(flat, std::exp(geo / 4), 1e-6);
  // Faster than linear growth clamps to slope one.
  std::vector<double> fast;
  for (int d = 1; d <= 5; ++d) fast.push_back(10.0 * d * d);
  EXPECT_LE(ProjectNe(fast, 30), 10.0 * 900);
  ExpectErrorCode([] { ProjectNe(std::vector<double>{1, 2}); },
                  ErrorCode::kInsufficientData);
}

class CorpusTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    CorpusSpec spec;
    spec.m = 200;
    spec.seed = 5;
    corpus_ = new Corpus(GenerateCorpus(spec));
  }
  static void TearDownTestSuite() {
    delete corpus_;
    corpus_ = nullptr;
  }
  static Corpus* corpus_;
};

Corpus* CorpusTest::corpus_ = nullptr;

TEST_F(CorpusTest, HistoryAndRelation) {
  const History h = BuildHistory(corpus_->store);
  ASSERT_EQ(h.records.size(), 200u);
  EXPECT_EQ(h.records[0].range, (DayRange{1, 21}));
  const auto rel = FitDeltaRelation(h, "sessions", "bookings");
  EXPECT_NEAR(rel.beta1, 0.5, 0.1);
  const auto prior = FitMetricPrior(h, "sessions");
  EXPECT_GT(prior.prior.pi1, 0.1);
  EXPECT_LT(prior.prior.pi1, 0.5);
  EXPECT_NEAR(corpus_->rho_observed, corpus_->spec.rho, 0.05);
}

TEST_F(CorpusTest, ScoresEveryExperiment) {
  const History h = BuildHistory(corpus_->store);
  const auto px = FitMetricPrior(h, "sessions").prior;
  const auto py = FitMetricPrior(h, "bookings").prior;
  const auto cond = EstimateConditionals(h, "sessions", "bookings",
                                         corpus_->rho_observed);
  EXPECT_NO_THROW(cond.Validate());
  EXPECT_GT(cond.y1_given_x1(), cond.y1_given_x0());
  const auto scores =
      ScoreEarlyIndicators(corpus_->store, "sessions", "bookings", 7, px, py, cond);
  ASSERT_EQ(scores.size(), 200u);
  for (const auto& s : scores) {
    const auto rec = RecordAt(corpus_->store, s.key, {1, 7});
    EXPECT_GE(s.n_e_pred, rec.Find("bookings")->n_e * (1 - 1e-12));
    EXPECT_DOUBLE_EQ(s.result.input.delta_x, rec.Find("sessions")->delta);
  }
}

TEST(UserCorrelationTest, MatchesPearson) {
  ExperimentConfig c = TwoArmConfig();
  std::vector<Event> events;
  std::vector<double> xs;
  std::vector<double> ys;
  for (int i = 0; i < 50; ++i) {
    const std::string u = "u" + std::to_string(i);
    const std::string v = c.variants[AssignVariant(c, u)].label;
    events.push_back(Exposure(u, 1, v));
    const double x = i % 7;
    const double y = 0.5 * x + (i % 3);
    events.push_back(Metric(u, 1, "x", x));
    events.push_back(Metric(u, 1, "y", y));
    xs.push_back(x);
    ys.push_back(y);
  }
  const IngestedLog log = Ingest(events, c);
  double mx = 0, my = 0;
  for (int i = 0; i < 50; ++i) {
    mx += xs[i] / 50;
    my += ys[i] / 50;
  }
  double sxy = 0, sxx = 0, syy = 0;
  for (int i = 0; i < 50; ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  EXPECT_NEAR(UserLevelCorrelation(log, "x", "y", {1, 1}),
              sxy / std::sqrt(sxx * syy), 1e-12);
}

}  // namespace
}  // namespace expdiag
