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

#include "expdiag/trigger.h"

#include <algorithm>
#include <cmath>

#include "expdiag/error.h"

namespace expdiag {

std::string_view PopulationModeName(PopulationMode mode) {
  switch (mode) {
    case PopulationMode::kTriggered:
      return "triggered";
    case PopulationMode::kAllUser:
      return "all_user";
    case PopulationMode::kSingleDay:
      return "single_day";
  }
  return "unknown";
}

ArmPair ResolveArms(const ExperimentConfig& config,
                    std::optional<std::string_view> treatment) {
  ArmPair arms;
  const int control = config.VariantIndex("control");
  arms.control = control >= 0 ? control : 0;
  if (treatment) {
    arms.treatment = config.VariantIndex(*treatment);
    if (arms.treatment < 0) {
      throw Error(ErrorCode::kNotFound,
                  "unknown variant '" + std::string(*treatment) + "'");
    }
    if (arms.treatment == arms.control) {
      throw Error(ErrorCode::kInvalidArgument,
                  "treatment and control must differ");
    }
  } else {
    arms.treatment = arms.control == 0 ? 1 : 0;
  }
  return arms;
}

namespace {

void CheckRange(const IngestedLog& log, DayRange range, PopulationMode mode) {
  if (range.first < log.first_day() || range.last > log.last_day()) {
    throw Error(ErrorCode::kInvalidArgument,
                "range " + range.ToString() + " outside experiment duration " +
                    log.full_range().ToString());
  }
  if (mode == PopulationMode::kSingleDay && range.first != range.last) {
    throw Error(ErrorCode::kInvalidArgument,
                "single-day mode needs a one-day range, got " +
                    range.ToString());
  }
}

// Per-user membership for the AllUser mode.
std::vector<char> TargetedMask(const IngestedLog& log, DayRange range) {
  std::vector<char> mask(log.user_count(), log.has_targeting() ? 0 : 1);
  if (log.has_targeting()) {
    for (int d = range.first; d <= range.last; ++d) {
      for (UserIndex u : log.targeted_on(d)) mask[u] = 1;
    }
  }
  return mask;
}

double RangeTotal(std::span<const MetricCell> cells, DayRange range) {
  double total = 0.0;
  for (const auto& c : cells) {
    if (c.day > range.last) break;
    if (c.day >= range.first) total += c.value;
  }
  return total;
}

}  // namespace

bool InPopulation(const IngestedLog& log, UserIndex u, DayRange range,
                  PopulationMode mode) {
  switch (mode) {
    case PopulationMode::kTriggered:
    case PopulationMode::kSingleDay:
      return log.TriggeredIn(u, range);
    case PopulationMode::kAllUser:
      if (!log.has_targeting()) return true;
      for (int d = range.first; d <= range.last; ++d) {
        auto members = log.targeted_on(d);
        if (std::binary_search(members.begin(), members.end(), u)) return true;
      }
      return false;
  }
  return false;
}

std::vector<int64_t> PopulationCounts(const IngestedLog& log, DayRange range,
                                      PopulationMode mode) {
  CheckRange(log, range, mode);
  std::vector<int64_t> counts(log.variant_count(), 0);
  if (mode == PopulationMode::kAllUser) {
    const auto mask = TargetedMask(log, range);
    for (size_t u = 0; u < log.user_count(); ++u) {
      if (mask[u]) ++counts[log.variant(static_cast<UserIndex>(u))];
    }
    return counts;
  }
  for (size_t u = 0; u < log.user_count(); ++u) {
    const auto user = static_cast<UserIndex>(u);
    if (log.TriggeredIn(user, range)) ++counts[log.variant(user)];
  }
  return counts;
}

std::vector<RangeSummary> BuildMetricSummaries(const IngestedLog& log,
                                               DayRange range,
                                               PopulationMode mode,
                                               int metric) {
  CheckRange(log, range, mode);
  const auto& config = log.config();
  std::vector<RangeSummary> out(config.variants.size());
  for (size_t v = 0; v < out.size(); ++v) {
    out[v].experiment_id = config.experiment_id;
    out[v].variant = config.variants[v].label;
    out[v].metric_id = log.metric_names()[metric];
    out[v].range = range;
  }
  std::vector<char> mask;
  if (mode == PopulationMode::kAllUser) mask = TargetedMask(log, range);
  for (size_t u = 0; u < log.user_count(); ++u) {
    const auto user = static_cast<UserIndex>(u);
    const bool member = mode == PopulationMode::kAllUser
                            ? mask[u] != 0
                            : log.TriggeredIn(user, range);
    if (!member) continue;
    const double total = RangeTotal(log.metric_cells(metric, user), range);
    RangeSummary& s = out[log.variant(user)];
    ++s.n;
    s.sum += total;
    s.sum_sq += total * total;
  }
  return out;
}

std::vector<RangeSummary> BuildSummaries(const IngestedLog& log,
                                         DayRange range, PopulationMode mode) {
  std::vector<RangeSummary> out;
  for (size_t m = 0; m < log.metric_count(); ++m) {
    auto part = BuildMetricSummaries(log, range, mode, static_cast<int>(m));
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

void AddToStore(SummaryStore& store, const IngestedLog& log, DayRange range,
                PopulationMode mode, const std::string& experiment_key) {
  const std::string& key =
      experiment_key.empty() ? log.config().experiment_id : experiment_key;
  for (auto s : BuildSummaries(log, range, mode)) {
    s.experiment_id = key;
    store.Add(s);
  }
  const auto counts = PopulationCounts(log, range, mode);
  for (size_t v = 0; v < counts.size(); ++v) {
    store.AddUserCount({key, log.config().variants[v].label, range}, counts[v]);
  }
}

std::vector<std::vector<int64_t>> CumulativeTriggeredCounts(
    const IngestedLog& log) {
  const int days = log.last_day() - log.first_day() + 1;
  std::vector<std::vector<int64_t>> out(log.variant_count(),
                                        std::vector<int64_t>(days, 0));
  for (size_t u = 0; u < log.user_count(); ++u) {
    const auto user = static_cast<UserIndex>(u);
    const int first = log.first_trigger_day(user);
    if (first == 0) continue;
    ++out[log.variant(user)][first - log.first_day()];
  }
  for (auto& series : out) {
    for (int d = 1; d < days; ++d) series[d] += series[d - 1];
  }
  return out;
}

std::string_view CoverageName(Coverage coverage) {
  return coverage == Coverage::kFullyCovered ? "fully_covered"
                                             : "partially_covered";
}

CoverageClass ClassifyCoverage(const IngestedLog& log,
                               std::string_view metric_id) {
  const int metric = log.MetricIndex(metric_id);
  CoverageClass result;
  result.metric_id = std::string(metric_id);
  for (size_t u = 0; u < log.user_count(); ++u) {
    const auto user = static_cast<UserIndex>(u);
    for (const auto& c : log.metric_cells(metric, user)) {
      if (c.value != 0.0 && !log.TriggeredOn(user, c.day)) ++result.evidence;
    }
  }
  result.coverage = result.evidence == 0 ? Coverage::kFullyCovered
                                         : Coverage::kPartiallyCovered;
  return result;
}

namespace {

RangeSummary MakeSummary(int64_t n, double sum, double sum_sq) {
  RangeSummary s;
  s.n = n;
  s.sum = sum;
  s.sum_sq = sum_sq;
  return s;
}

double Lift(double sum_t, int64_t n_t, double sum_c, int64_t n_c) {
  return (sum_t / static_cast<double>(n_t)) /
             (sum_c / static_cast<double>(n_c)) -
         1.0;
}

}  // namespace

RangeSummary ArmDecomposition::X() const {
  return MakeSummary(n, sum_x(), sum_x_sq());
}
RangeSummary ArmDecomposition::I() const {
  return MakeSummary(n, sum_i, sum_i_sq);
}
RangeSummary ArmDecomposition::O() const {
  return MakeSummary(n, sum_o, sum_o_sq);
}

double DecomposedSums::DeltaX() const {
  return Lift(treatment().sum_x(), treatment().n, control().sum_x(),
              control().n);
}
double DecomposedSums::DeltaI() const {
  return Lift(treatment().sum_i, treatment().n, control().sum_i, control().n);
}
double DecomposedSums::DeltaO() const {
  return Lift(treatment().sum_o, treatment().n, control().sum_o, control().n);
}

DecomposedSums DecomposeInOff(const IngestedLog& log,
                              std::string_view metric_id, DayRange range,
                              ArmPair arms) {
  CheckRange(log, range, PopulationMode::kTriggered);
  const int metric = log.MetricIndex(metric_id);
  DecomposedSums out;
  out.metric_id = std::string(metric_id);
  out.range = range;
  out.arms = arms;
  out.by_variant.resize(log.variant_count());
  for (size_t u = 0; u < log.user_count(); ++u) {
    const auto user = static_cast<UserIndex>(u);
    if (!log.TriggeredIn(user, range)) continue;
    ArmDecomposition& arm = out.by_variant[log.variant(user)];
    int64_t on = 0;
    for (int32_t d : log.trigger_days(user)) on += range.Contains(d) ? 1 : 0;
    double in_sum = 0.0;
    double off_sum = 0.0;
    for (const auto& c : log.metric_cells(metric, user)) {
      if (!range.Contains(c.day)) continue;
      if (log.TriggeredOn(user, c.day)) {
        in_sum += c.value;
      } else {
        off_sum += c.value;
      }
    }
    ++arm.n;
    arm.trigger_days += on;
    arm.off_days += range.length() - on;
    arm.sum_i += in_sum;
    arm.sum_o += off_sum;
    arm.sum_i_sq += in_sum * in_sum;
    arm.sum_o_sq += off_sum * off_sum;
    arm.sum_io += in_sum * off_sum;
  }
  const auto& c = out.control();
  const auto& t = out.treatment();
  if (c.n == 0 || t.n == 0) {
    throw Error(ErrorCode::kInsufficientData,
                "triggered population is empty in " + range.ToString());
  }
  if (c.sum_x() != 0.0) out.w = c.sum_i / c.sum_x();
  if (c.sum_i == 0.0) {
    throw Error(ErrorCode::kUndefined,
                "w undefined: control in-trigger mean is zero for " +
                    out.metric_id);
  }
  return out;
}

double VarianceInflationFully(double k, double r, double delta_pct,
                              double mean_t, double mean_c, double var_t,
                              double var_c) {
  if (!(k >= 1.0)) {
    throw Error(ErrorCode::kDataIntegrity,
                "population/trigger ratio k must be >= 1 (triggered "
                "population larger than total)");
  }
  if (!(r > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "allocation ratio r must be > 0");
  }
  const double g = r * (1.0 + delta_pct) * (1.0 + delta_pct);
  const double denom = var_t + g * var_c;
  if (!(denom > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument,
                "variance inflation needs positive arm variances");
  }
  return 1.0 + (mean_t * mean_t + g * mean_c * mean_c) / denom * (1.0 - 1.0 / k);
}

double TRatioBoundPartial(int64_t n_c, double ss_c, int64_t n_prime_c,
                          double ss_prime_c) {
  if (n_c <= 0 || !(ss_c > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument,
                "triggered count and mean square must be positive");
  }
  // A superset never has a smaller total sum of squares about its mean.
  if (n_prime_c < n_c || static_cast<double>(n_prime_c) * ss_prime_c <
                             static_cast<double>(n_c) * ss_c) {
    throw Error(ErrorCode::kDataIntegrity,
                "triggered population exceeds the all-user population");
  }
  return 1.0 / std::sqrt(static_cast<double>(n_prime_c) * ss_prime_c /
                         (static_cast<double>(n_c) * ss_c));
}

std::vector<NewReturned> NewReturnedCounts(const IngestedLog& log, int day) {
  if (day < log.first_day() + 1 || day > log.last_day()) {
    throw Error(ErrorCode::kInvalidArgument,
                "new/returned split needs a day in [" +
                    std::to_string(log.first_day() + 1) + "," +
                    std::to_string(log.last_day()) + "], got " +
                    std::to_string(day));
  }
  const DayRange before{log.first_day(), day - 1};
  const DayRange through{log.first_day(), day};
  std::vector<int64_t> n_before(log.variant_count(), 0);
  std::vector<int64_t> n_through(log.variant_count(), 0);
  std::vector<int64_t> n_day(log.variant_count(), 0);
  for (size_t u = 0; u < log.user_count(); ++u) {
    const auto user = static_cast<UserIndex>(u);
    const int v = log.variant(user);
    n_before[v] += log.TriggeredIn(user, before) ? 1 : 0;
    n_through[v] += log.TriggeredIn(user, through) ? 1 : 0;
    n_day[v] += log.TriggeredOn(user, day) ? 1 : 0;
  }
  std::vector<NewReturned> out(log.variant_count());
  for (int v = 0; v < log.variant_count(); ++v) {
    out[v].n_new = n_through[v] - n_before[v];
    out[v].n_returned = n_before[v] + n_day[v] - n_through[v];
    out[v].n_day = n_day[v];
    if (out[v].n_new < 0 || out[v].n_returned < 0) {
      throw Error(ErrorCode::kInternal, "negative new/returned count");
    }
  }
  return out;
}

}  // namespace expdiag
