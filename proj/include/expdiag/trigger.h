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

#ifndef EXPDIAG_TRIGGER_H_
#define EXPDIAG_TRIGGER_H_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "expdiag/datamodel.h"
#include "expdiag/stats.h"
#include "expdiag/store.h"

namespace expdiag {

enum class PopulationMode {
  // Users with >= 1 exposure in the range; totals over the whole range.
  kTriggered,
  // Targeted users (every user in the log when no targeting is recorded).
  kAllUser,
  // Users exposed on the single day of the range; totals over that day.
  kSingleDay,
};

std::string_view PopulationModeName(PopulationMode mode);

// Which variants are compared. Control is the variant labelled "control",
// else the first declared; treatment defaults to the first other variant.
struct ArmPair {
  int treatment = 1;
  int control = 0;
};
ArmPair ResolveArms(const ExperimentConfig& config,
                    std::optional<std::string_view> treatment = std::nullopt);

bool InPopulation(const IngestedLog& log, UserIndex u, DayRange range,
                  PopulationMode mode);

// Users per variant in the population.
std::vector<int64_t> PopulationCounts(const IngestedLog& log, DayRange range,
                                      PopulationMode mode);

// One summary per variant, indexed like config().variants. Empty
// populations give n = 0. kSingleDay needs a one-day range.
std::vector<RangeSummary> BuildMetricSummaries(const IngestedLog& log,
                                               DayRange range,
                                               PopulationMode mode,
                                               int metric);

// Summaries for every metric, metric-major then variant.
std::vector<RangeSummary> BuildSummaries(const IngestedLog& log,
                                         DayRange range, PopulationMode mode);

// Adds the summaries and user counts of `range` under `experiment_key`
// (defaults to the log's experiment id).
void AddToStore(SummaryStore& store, const IngestedLog& log, DayRange range,
                PopulationMode mode, const std::string& experiment_key = "");

// n^[x,y] per variant for x = first day, y = first day .. last day.
std::vector<std::vector<int64_t>> CumulativeTriggeredCounts(
    const IngestedLog& log);

enum class Coverage { kFullyCovered, kPartiallyCovered };
std::string_view CoverageName(Coverage coverage);

struct CoverageClass {
  std::string metric_id;
  Coverage coverage = Coverage::kFullyCovered;
  // Nonzero user-days that are not trigger days.
  int64_t evidence = 0;
};

// Throws kNotFound for an unknown metric.
CoverageClass ClassifyCoverage(const IngestedLog& log,
                               std::string_view metric_id);

// Per-variant sums over the triggered population of a range, with every
// user's total X split into trigger-day (I) and other-day (O) parts.
struct ArmDecomposition {
  int64_t n = 0;
  int64_t trigger_days = 0;
  int64_t off_days = 0;
  double sum_i = 0.0;
  double sum_o = 0.0;
  double sum_i_sq = 0.0;
  double sum_o_sq = 0.0;
  double sum_io = 0.0;

  double sum_x() const { return sum_i + sum_o; }
  double sum_x_sq() const { return sum_i_sq + 2.0 * sum_io + sum_o_sq; }
  // Moments as summaries (ids and range left empty).
  RangeSummary X() const;
  RangeSummary I() const;
  RangeSummary O() const;
};

struct DecomposedSums {
  std::string metric_id;
  DayRange range;
  ArmPair arms;
  std::vector<ArmDecomposition> by_variant;
  // Share of the control metric contributed on trigger days, I_c / X_c.
  // Absent when the control mean of X is zero.
  std::optional<double> w;

  const ArmDecomposition& treatment() const { return by_variant[arms.treatment]; }
  const ArmDecomposition& control() const { return by_variant[arms.control]; }
  // Lifts computed directly from the pooled sums.
  double DeltaX() const;
  double DeltaI() const;
  double DeltaO() const;
};

// Throws kInsufficientData when the triggered population is empty and
// kUndefined when the control in-trigger mean is zero.
DecomposedSums DecomposeInOff(const IngestedLog& log, std::string_view metric_id,
                              DayRange range, ArmPair arms = {});

// Closed-form variance ratio var(D') / var(D) of the all-user over the
// triggered analysis for a fully-covered metric. k = n'_c / n_c,
// r = n_t / n_c. Throws kDataIntegrity when k < 1.
double VarianceInflationFully(double k, double r, double delta_pct,
                              double mean_t, double mean_c, double var_t,
                              double var_c);

// 1 / sqrt(n'_c SS'_c / (n_c SS_c)): approximate upper bound on t'/t for a
// partially-covered metric, where SS is the per-member mean square about the
// control mean (the sample variance). Throws kDataIntegrity when the
// triggered population, or its total n * SS, exceeds the all-user one.
double TRatioBoundPartial(int64_t n_c, double ss_c, int64_t n_prime_c,
                          double ss_prime_c);

struct NewReturned {
  int64_t n_new = 0;
  int64_t n_returned = 0;
  int64_t n_day = 0;  // n^[k,k]
};

// Per variant for day k >= first_day + 1, from n^[1,k-1], n^[1,k], n^[k,k].
std::vector<NewReturned> NewReturnedCounts(const IngestedLog& log, int day);

}  // namespace expdiag

#endif  // EXPDIAG_TRIGGER_H_
