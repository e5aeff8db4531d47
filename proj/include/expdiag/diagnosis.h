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

#ifndef EXPDIAG_DIAGNOSIS_H_
#define EXPDIAG_DIAGNOSIS_H_

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "expdiag/datamodel.h"
#include "expdiag/trigger.h"

namespace expdiag {

inline constexpr double kDefaultSsrAlpha = 0.001;

enum class Verdict { kBalanced, kMismatch, kSkipped };
std::string_view VerdictName(Verdict verdict);

// Sample size ratio test outcome for one population.
struct SsrResult {
  std::string check;
  std::vector<int64_t> observed;
  std::vector<double> expected;
  double stat = 0.0;
  double p_value = 1.0;
  double alpha = kDefaultSsrAlpha;
  Verdict verdict = Verdict::kSkipped;
  std::string note;

  bool mismatch() const { return verdict == Verdict::kMismatch; }
};

// Chi-squared test of per-variant counts against the allocation. A zero
// total gives a Skipped result carrying `skip_note`.
SsrResult SsrFromCounts(std::string check, const ExperimentConfig& config,
                        std::vector<int64_t> counts, double alpha,
                        std::string skip_note = "no users");

// Triggered users in `range`. Throws kInsufficientData when nobody
// triggered.
SsrResult SsrTest(const IngestedLog& log, DayRange range,
                  double alpha = kDefaultSsrAlpha);

struct TargetedCheck {
  // Users targeted on the last recorded day of the range.
  SsrResult snapshot;
  std::vector<std::pair<int, SsrResult>> by_day;
};
TargetedCheck CheckTargeted(const IngestedLog& log, DayRange range,
                            double alpha = kDefaultSsrAlpha);

struct NewReturnedDay {
  int day = 0;
  std::vector<NewReturned> counts;  // per variant
  SsrResult new_users;
  SsrResult returned_users;
};

struct NewReturnedCheck {
  // New: first trigger inside the range. Returned: first trigger before the
  // range and triggered again inside it.
  SsrResult new_users;
  SsrResult returned_users;
  std::vector<NewReturnedDay> series;
  std::optional<int> first_significant_new_day;
  std::optional<int> first_significant_returned_day;
};
NewReturnedCheck CheckNewReturned(const IngestedLog& log, DayRange range,
                                  double alpha = kDefaultSsrAlpha);
// Day-k split only: (new, returned).
std::pair<SsrResult, SsrResult> CheckNewReturnedDay(
    const IngestedLog& log, int day, double alpha = kDefaultSsrAlpha);

// Metric events (optionally restricted to one source tag) that reproduce the
// trigger condition without the experiment's code call.
struct TrackingPredicate {
  std::optional<std::string> metric_id;
  std::optional<std::string> source_tag;

  std::string ToString() const;
};
SsrResult CheckIndependentTracking(const IngestedLog& log,
                                   const TrackingPredicate& predicate,
                                   DayRange range,
                                   double alpha = kDefaultSsrAlpha);

// One result per service tag over users exposed through it in the range; a
// single Skipped result when exposures carry no tags.
std::vector<SsrResult> CheckServiceSplit(const IngestedLog& log,
                                         DayRange range,
                                         double alpha = kDefaultSsrAlpha);

struct OverlapResult {
  std::string sibling_experiment_id;
  // Per variant of the primary log.
  std::vector<int64_t> a;
  std::vector<int64_t> b1;  // primary only
  std::vector<int64_t> b2;  // sibling only
  std::vector<int64_t> a1;  // primary first, or same first day
  std::vector<int64_t> a2;  // sibling strictly first
  int64_t same_day_ties = 0;
  SsrResult union_ssr;
  SsrResult a2_ssr;
  std::vector<std::string> notes;
};
// Throws kInvalidArgument when hash ids or variant labels differ.
OverlapResult CheckSharedHashOverlap(const IngestedLog& primary,
                                     const IngestedLog& sibling,
                                     DayRange range,
                                     double alpha = kDefaultSsrAlpha);

struct Hypothesis {
  std::string label;
  double p_value = 1.0;
  double stat = 0.0;
  std::vector<std::string> evidence;
};

struct DiagnosisOptions {
  double alpha = kDefaultSsrAlpha;
  // Defaults to the log's counting range.
  std::optional<DayRange> range;
  std::optional<TrackingPredicate> tracking;
};

struct DiagnosisReport {
  std::string experiment_id;
  DayRange range;
  double alpha = kDefaultSsrAlpha;
  SsrResult primary;
  std::optional<TargetedCheck> targeted;
  NewReturnedCheck new_returned;
  std::optional<SsrResult> independent_tracking;
  std::vector<SsrResult> services;
  std::vector<OverlapResult> overlaps;
  // Ranked by p-value ascending, then statistic descending.
  std::vector<Hypothesis> hypotheses;
  std::vector<std::string> remediation;

  // Empty when the primary test is balanced.
  std::optional<std::string> top_label() const;
};

DiagnosisReport Diagnose(const IngestedLog& log,
                         std::span<const IngestedLog* const> siblings,
                         const DiagnosisOptions& options = {});

nlohmann::json SsrToJson(const SsrResult& r);
nlohmann::json DiagnosisToJson(const DiagnosisReport& report);
// Per-day new/returned counts and treatment/control ratios as a table.
std::string NewReturnedTable(const DiagnosisReport& report,
                             const ExperimentConfig& config);

}  // namespace expdiag

#endif  // EXPDIAG_DIAGNOSIS_H_
