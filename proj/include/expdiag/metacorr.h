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

#ifndef EXPDIAG_METACORR_H_
#define EXPDIAG_METACORR_H_

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "expdiag/datamodel.h"
#include "expdiag/stats.h"
#include "expdiag/store.h"

namespace expdiag {

inline constexpr double kMetaAlpha = 0.05;

struct MetricRecord {
  double delta_pct = 0.0;
  double delta_abs = 0.0;  // mean_t - mean_c
  double sigma = 0.0;      // pooled per-user sd, sigma^2 / N_e = v_t/N_t + v_c/N_c
  double delta = 0.0;      // delta_abs / sigma
  double n_e = 0.0;
  double p_value = 1.0;
  // Relative lift detectable with 80% power at the two-sided 0.05 level.
  double mde_pct = 0.0;

  bool significant(double alpha = kMetaAlpha) const { return p_value < alpha; }
  NormalizedEffect effect() const { return {delta, n_e}; }
};

// Throws kInsufficientData when an arm has fewer than two users and
// kUndefined when the control mean is zero.
MetricRecord MakeMetricRecord(const RangeSummary& treatment,
                              const RangeSummary& control);

struct ExperimentHistoryRecord {
  std::string experiment_id;
  std::string iteration;  // store key the record came from
  DayRange range;
  int run_days = 0;
  std::map<std::string, MetricRecord> metrics;

  const MetricRecord* Find(const std::string& metric) const;
};

struct HistoryExclusion {
  std::string experiment_id;
  std::string reason;
};

struct History {
  std::vector<ExperimentHistoryRecord> records;
  std::vector<HistoryExclusion> excluded;
};

// Store keys "<experiment>@<iteration>" group iterations; a key without '@'
// is its own experiment. Per experiment: the iteration with the largest
// N_e, then its longest range starting on the first day.
History BuildHistory(const SummaryStore& store, int min_days = 7);

// Record of one store key over one range.
ExperimentHistoryRecord RecordAt(const SummaryStore& store,
                                 const std::string& key, DayRange range);

struct ComovementResult {
  std::string x;
  std::string y;
  double rho = 0.0;
  double alpha = kMetaAlpha;
  int64_t conditioning = 0;  // records with Y significant
  int64_t co_significant = 0;
  double expected = 0.0;
  double observed = 0.0;
  double stat = 0.0;
  double p_value = 1.0;
  bool elevated = false;
  double score = 0.0;  // chi-squared statistic
};

struct ComovementOptions {
  double alpha = kMetaAlpha;
  int64_t n_sim = 200000;
  uint64_t seed = 1;
  int64_t min_conditioning = 30;
};

// P(X significant | Y significant) against the null co-significance
// expected from rho, one-sided. Throws kInsufficientData ("insufficient
// history") with fewer than `min_conditioning` records where Y is
// significant.
ComovementResult Comovement(const History& history, const std::string& x,
                            const std::string& y, double rho,
                            const ComovementOptions& options = {});

struct DeltaRelation {
  std::string x;
  std::string y;
  double beta0 = 0.0;
  double beta1 = 0.0;
  double beta1_se = 0.0;
  double r_squared = 0.0;
  int64_t discoveries = 0;
  std::vector<std::string> points_used;
  std::vector<std::string> outliers;
};

struct DeltaRelationOptions {
  double q = 0.05;
  int64_t min_discoveries = 10;
  double outlier_threshold = 3.0;
};

// Benjamini-Hochberg on X, then OLS of Y lift on X lift over the
// discoveries with one outlier pass. Throws kInsufficientData
// ("insufficient discoveries") below `min_discoveries`.
DeltaRelation FitDeltaRelation(const History& history, const std::string& x,
                               const std::string& y,
                               const DeltaRelationOptions& options = {});

// P(H^Y | H^X): [h_x][h_y], rows summing to one.
struct Conditionals {
  double p[2][2] = {{1.0, 0.0}, {0.0, 1.0}};

  double y1_given_x1() const { return p[1][1]; }
  double y1_given_x0() const { return p[0][1]; }
  static Conditionals Uninformative(double pi1_y);
  // Throws kInvalidArgument unless every row is a distribution.
  void Validate() const;
};

// Co-significance rates in history minus the rate expected without any
// effect (the rho-driven share when X is significant, alpha otherwise),
// floored at zero.
Conditionals EstimateConditionals(const History& history, const std::string& x,
                                  const std::string& y, double rho,
                                  const ComovementOptions& options = {});

// Two-group prior of one metric fitted on the history records.
EmFit FitMetricPrior(const History& history, const std::string& metric,
                     const EmOptions& options = {});

// P(H1 | delta) under a two-group prior.
double SingleMetricPosterior(double delta, double n_e,
                             const TwoGroupPrior& prior);

struct EarlyIndicatorInput {
  double delta_x = 0.0;
  double n_e_x = 0.0;
  double delta_y = 0.0;
  double n_e_y_pred = 0.0;
  TwoGroupPrior prior_x;
  TwoGroupPrior prior_y;
  Conditionals conditionals;
  double threshold = 0.6;
};

struct EarlyIndicatorResult {
  EarlyIndicatorInput input;
  double posterior_x = 0.0;    // P(H1^X | delta_x)
  double prior_y = 0.0;        // P(H1^Y | delta_x)
  double likelihood_ratio = 1.0;
  double posterior = 0.0;      // P(H1^Y | delta_x, delta_y)
  bool flag = false;
};

// Throws kInvalidArgument for non-positive N_e or conditionals that are not
// distributions.
EarlyIndicatorResult EarlyIndicator(const EarlyIndicatorInput& input);

// Fits log N_e = a + b log(day), b clamped to [0, 1], and extrapolates.
// `n_e[i]` belongs to day i + 1. Throws kInsufficientData below three days.
double ProjectNe(std::span<const double> n_e, int target_day = 30);

struct EarlyScore {
  std::string key;  // store key
  double n_e_pred = 0.0;
  EarlyIndicatorResult result;
};

// Early indicator for every store key with two-arm summaries of both
// metrics over [1, day] and user counts for each of [1, 1] .. [1, day].
// N_e of Y is projected to `target_day`. Keys lacking data are skipped.
std::vector<EarlyScore> ScoreEarlyIndicators(
    const SummaryStore& store, const std::string& x, const std::string& y,
    int day, const TwoGroupPrior& prior_x, const TwoGroupPrior& prior_y,
    const Conditionals& conditionals, double threshold = 0.6,
    int target_day = 30);

// Pearson correlation of per-user totals over the triggered users of
// `range`, all variants pooled.
double UserLevelCorrelation(const IngestedLog& log, std::string_view x,
                            std::string_view y, DayRange range);

nlohmann::json HistoryToJson(const History& history);
nlohmann::json ComovementToJson(const ComovementResult& r);
nlohmann::json DeltaRelationToJson(const DeltaRelation& r);
nlohmann::json EarlyIndicatorToJson(const EarlyIndicatorResult& r);
nlohmann::json EarlyScoreToJson(const EarlyScore& s);

}  // namespace expdiag

#endif  // EXPDIAG_METACORR_H_
