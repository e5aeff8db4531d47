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

#ifndef EXPDIAG_TEMPORAL_H_
#define EXPDIAG_TEMPORAL_H_

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "expdiag/datamodel.h"
#include "expdiag/stats.h"
#include "expdiag/trigger.h"

namespace expdiag {

// Share of trigger-day contribution after k days for a user who triggers
// with daily probability p and contributes r times more on trigger days.
// Throws kInvalidArgument unless 0 < p <= 1, r >= 0 and k >= 1.
double WkModel(double p, double r, int k);
double WkLimit(double p, double r);

// Single-day and cumulative lifts of one metric, day index 0 = first day.
struct ImpactSeries {
  std::string metric_id;
  Coverage coverage = Coverage::kPartiallyCovered;
  ArmPair arms;
  int first_day = 1;
  std::optional<std::string> start_weekday;
  // Users exposed on day t, their day-t totals.
  std::vector<RangeSummary> single_t;
  std::vector<RangeSummary> single_c;
  // Users exposed in [first, t], their totals over [first, t].
  std::vector<RangeSummary> cross_t;
  std::vector<RangeSummary> cross_c;
  // Absent where the lift is undefined (too few users, zero control mean).
  std::vector<std::optional<DeltaEstimate>> single_day;
  std::vector<std::optional<DeltaEstimate>> cross_day;

  int days() const { return static_cast<int>(single_day.size()); }
};

ImpactSeries BuildImpactSeries(const IngestedLog& log,
                               std::string_view metric_id, ArmPair arms = {});

struct PrEstimate {
  double p = 0.0;
  std::optional<double> r;
  std::string note;
};

// Control arm: p from trigger days per triggered user-day, r from per-day
// contributions on and off trigger days.
PrEstimate EstimatePR(const DecomposedSums& sums);
PrEstimate EstimatePR(const IngestedLog& log, std::string_view metric_id,
                      DayRange range);

struct TriggerDayOptions {
  double w_threshold = 0.8;
  double alpha = 0.01;
};

struct TriggerDayFinding {
  std::string metric_id;
  Coverage coverage = Coverage::kPartiallyCovered;
  int k = 0;
  // Observed I_c / X_c after each day, and the model curve at (p, r).
  std::vector<double> w_observed;
  std::vector<double> w_model;
  double w_k = 1.0;
  double delta_x = 0.0;
  double delta_i = 0.0;
  double delta_o = 0.0;
  // Upper bounds using var(I), var(O) <= var(X).
  double var_i_bound = 0.0;
  double var_o_bound = 0.0;
  double t_stat = 0.0;
  double p_value = 1.0;
  double p_hat = 0.0;
  std::optional<double> r_hat;
  double w_limit = 1.0;
  double projected_impact = 0.0;
  bool flag = false;
  std::vector<std::string> reasons;
};

// Throws kInsufficientData for fewer than three days and kDataIntegrity when
// the pooled single-day sums disagree with the decomposition.
TriggerDayFinding DetectTriggerDay(const ImpactSeries& series,
                                   const DecomposedSums& decomposed,
                                   const TriggerDayOptions& options = {});

struct NoveltyOptions {
  double alpha_trend = 0.35;
  double gamma = 2.0;
  double r2_min = 0.8;
  double alpha_extremes = 0.005;
};

struct NoveltyFinding {
  int days = 0;
  std::vector<double> observed;  // per day, NaN where undefined
  std::vector<double> fitted;
  double beta0 = 0.0;
  double beta1 = 0.0;
  double beta2 = 0.0;
  double r_squared = 0.0;
  bool monotone = false;
  // Root of the fitted slope inside (1, T), if any.
  std::optional<double> turning_point;
  int max_day = 0;
  int min_day = 0;
  double extremes_t = 0.0;
  double extremes_p = 1.0;
  bool flag = false;
  std::vector<std::string> reasons;
  std::vector<std::string> caveats;
};

// `single_day[t]` is the lift on day t + 1. Throws kInsufficientData
// ("insufficient days") for fewer than seven defined days.
NoveltyFinding DetectNovelty(
    std::span<const std::optional<DeltaEstimate>> single_day,
    std::optional<std::string_view> start_weekday,
    const NoveltyOptions& options = {});
NoveltyFinding DetectNovelty(const ImpactSeries& series,
                             const NoveltyOptions& options = {});

struct CohortOptions {
  std::string fresh_variant = "treatment_late";
  std::string seasoned_variant = "treatment";
  int split_day = 0;
  int window = 1;
};

struct CohortMagnitude {
  std::string metric_id;
  DayRange window;
  DeltaEstimate fresh;
  DeltaEstimate seasoned;
  double magnitude = 0.0;
  double std_error = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
};

// Fresh-cohort lift minus seasoned-cohort lift over the same days, both
// against control. Throws kInvalidArgument when the cohorts cannot be told
// apart and kInsufficientData when either one is empty in the window.
CohortMagnitude CohortNoveltyMagnitude(const IngestedLog& log,
                                       std::string_view metric_id,
                                       const CohortOptions& options);

nlohmann::json DeltaToJson(const DeltaEstimate& d);
nlohmann::json ImpactSeriesToJson(const ImpactSeries& series);
nlohmann::json TriggerDayToJson(const TriggerDayFinding& f);
nlohmann::json NoveltyToJson(const NoveltyFinding& f);
nlohmann::json CohortToJson(const CohortMagnitude& c);

// Plot data as tab-separated tables.
std::string WkTable(const ImpactSeries& series, const TriggerDayFinding& f);
std::string NoveltyTable(const NoveltyFinding& f);

}  // namespace expdiag

#endif  // EXPDIAG_TEMPORAL_H_
