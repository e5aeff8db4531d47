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

#ifndef EXPDIAG_SIMULATOR_H_
#define EXPDIAG_SIMULATOR_H_

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "expdiag/datamodel.h"
#include "expdiag/trigger.h"

namespace expdiag {

enum class ScenarioKind {
  kClean,
  kCoolOffBug,
  kResidual,
  kDynamicTargeting,
  kDependentExperiments,
  kBiasedImplementation,
  kTriggerDay,
  kNovelty,
};

std::string_view ScenarioKindName(ScenarioKind kind);
ScenarioKind ParseScenarioKind(std::string_view name);

enum class NoiseFamily {
  // Poisson counts on a gamma-mixed per-user mean (negative binomial).
  kCount,
  // Log-normal values with the given mean and coefficient of variation.
  kContinuous,
};

struct MetricModel {
  std::string metric_id;
  Coverage coverage = Coverage::kPartiallyCovered;
  NoiseFamily noise = NoiseFamily::kCount;
  double in_mean = 4.0;   // expected contribution of a trigger day
  double off_mean = 2.0;  // expected contribution of any other day
  double in_lift = 0.0;   // treatment lift on trigger days
  double off_lift = 0.0;  // treatment lift on other days
  double cv = 1.0;        // continuous family only
  // Attached to every event of this metric when set.
  std::optional<std::string> source_tag;
};

// Lift on a trigger day as a function of the user's cumulative number of
// treated trigger days c: base + amplitude * c^-power.
struct NoveltySchedule {
  double base = 0.0;
  double amplitude = 0.0;
  double power = 0.35;

  double Lift(int c) const;
};

struct ScenarioSpec {
  ScenarioKind kind = ScenarioKind::kClean;
  std::string experiment_id = "exp";
  // Derived from the seed when empty, so seeds re-randomize the split.
  std::string hash_id;
  int64_t n_users = 10000;
  int k_days = 14;
  std::vector<VariantAllocation> variants = {{"control", 0.5},
                                             {"treatment", 0.5}};
  double p = 0.2;             // daily trigger probability
  double p_dispersion = 0.0;  // 0: homogeneous; else Beta concentration^-1
  double activity_cv = 0.5;   // per-user gamma multiplier on every metric
  // Empty means the kind's default metrics.
  std::vector<MetricModel> metrics;
  std::optional<NoveltySchedule> novelty;
  // Cohort variant exposed to treatment only from this day; before it the
  // cohort sees the control experience.
  std::optional<int> late_cohort_day;
  std::optional<std::string> start_weekday;
  // Extra trigger-day lift by weekday (mon..sun); needs start_weekday.
  std::map<std::string, double> weekday_lift;
  // Code paths tagged on exposures, picked uniformly per exposure.
  std::vector<std::string> services;

  int count_from_day = 1;
  // CoolOffBug
  int cool_off_impressions = 2;
  double click_probability = 0.1;
  // Residual
  double return_lift = 0.3;
  // DynamicTargeting
  double evict_baseline = 0.002;
  double evict_feedback = 0.05;
  // DependentExperiments
  double parent_p = 0.2;
  double ctr_control = 0.2;
  double ctr_treatment = 0.3;
  double direct_p = 0.01;
  // BiasedImplementation
  double direct_service_p = 0.3;

  uint64_t seed = 1;

  // Throws kInvalidArgument on out-of-range fields.
  void Validate() const;
  // Spec with the kind's defaults applied (metrics, count_from_day, ...).
  ScenarioSpec Resolved() const;
};

// Spec carrying the kind's default parameters (counting start, trigger
// probability, run length).
ScenarioSpec DefaultSpec(ScenarioKind kind, uint64_t seed);

nlohmann::json SpecToJson(const ScenarioSpec& spec);
// Absent keys keep the kind's defaults.
ScenarioSpec SpecFromJson(const nlohmann::json& j);

struct GroundTruth {
  std::string label;
  double p = 0.0;
  double r = 0.0;
  std::map<std::string, Coverage> coverage;
  std::map<std::string, double> in_lift;
  std::map<std::string, double> off_lift;
  // Per variant: users with >= 1 exposure over the whole run.
  std::vector<int64_t> exposed_users;
  // Per variant: users whose first exposure falls on each day (index 0 =
  // day 1) and users exposed on each day after an earlier exposure.
  std::vector<std::vector<int64_t>> new_by_day;
  std::vector<std::vector<int64_t>> returned_by_day;
  // Per variant and metric: sum of every emitted value.
  std::vector<std::map<std::string, double>> metric_totals;
  int64_t exposure_events = 0;
  int64_t metric_events = 0;
  // CoolOffBug: treatment users who reached the trigger page in the counting
  // range but fired no exposure there because they were cooled off.
  int64_t suppressed_users = 0;
  // Per variant: users reaching the trigger page in the counting range.
  std::vector<int64_t> page_visitors;
  // Metric and source that reproduce the trigger condition independently.
  std::optional<std::string> tracking_metric;
  std::optional<std::string> tracking_source;
};

nlohmann::json TruthToJson(const GroundTruth& truth);

struct GeneratedLog {
  ExperimentConfig config;
  std::vector<Event> events;
};

struct GeneratedExperiment {
  GeneratedLog primary;
  // DependentExperiments: the parent experiment sharing the hash id.
  std::optional<GeneratedLog> sibling;
  GroundTruth truth;
};

// Deterministic in the spec: identical specs give identical events.
GeneratedExperiment Generate(const ScenarioSpec& spec);

// Zero-padded user id so lexicographic and numeric order agree.
std::string SimUserId(int64_t index);

}  // namespace expdiag

#endif  // EXPDIAG_SIMULATOR_H_
