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

#ifndef EXPDIAG_DATAMODEL_H_
#define EXPDIAG_DATAMODEL_H_

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace expdiag {

// Inclusive range of experiment-relative days, [first, last].
struct DayRange {
  int first = 1;
  int last = 1;

  // Throws kInvalidArgument when first < 1 or first > last.
  static DayRange Make(int first, int last);
  static DayRange Single(int day) { return Make(day, day); }

  bool Contains(int day) const { return day >= first && day <= last; }
  int length() const { return last - first + 1; }
  std::string ToString() const;

  friend auto operator<=>(const DayRange&, const DayRange&) = default;
};

// Parses "x,y" (or a single "d" meaning [d,d]).
DayRange ParseDayRange(std::string_view text);

struct ExposureEvent {
  std::string user_id;
  std::string experiment_id;
  std::string variant;
  int day = 1;
  std::optional<std::string> service_tag;

  friend bool operator==(const ExposureEvent&, const ExposureEvent&) = default;
};

struct MetricEvent {
  std::string user_id;
  int day = 1;
  std::string metric_id;
  double value = 0.0;
  std::optional<std::string> source_tag;

  friend bool operator==(const MetricEvent&, const MetricEvent&) = default;
};

using Event = std::variant<ExposureEvent, MetricEvent>;

struct VariantAllocation {
  std::string label;
  double fraction = 0.0;

  friend bool operator==(const VariantAllocation&,
                         const VariantAllocation&) = default;
};

struct ExperimentConfig {
  std::string experiment_id;
  // Randomization namespace. Experiments sharing a hash_id share the user
  // split.
  std::string hash_id;
  std::vector<VariantAllocation> variants;
  int start_day = 1;
  // First day whose triggers are counted by the default analysis range.
  int count_from_day = 1;
  // Declared last day of the experiment; events past it are rejected.
  std::optional<int> end_day;
  // Weekday of day 1 ("mon" .. "sun"), used for day-of-week caveats.
  std::optional<std::string> start_weekday;
  // Day -> user ids targeted on that day. Absent for untargeted experiments.
  std::optional<std::map<int, std::vector<std::string>>> target_membership;

  // Throws kInvalidArgument on empty ids, fewer than two variants,
  // non-positive fractions, fractions not summing to 1, or bad day bounds.
  void Validate() const;

  // Index of `label` in `variants`, or -1.
  int VariantIndex(std::string_view label) const;
  std::vector<double> Fractions() const;

  friend bool operator==(const ExperimentConfig&,
                         const ExperimentConfig&) = default;
};

// Deterministic bucket assignment of a user under the config's hash_id and
// allocation fractions.
int AssignVariant(const ExperimentConfig& config, std::string_view user_id);

using UserIndex = int32_t;

struct MetricCell {
  int32_t day = 0;
  double value = 0.0;

  friend bool operator==(const MetricCell&, const MetricCell&) = default;
};

struct ServiceExposure {
  int32_t day = 0;
  int32_t service = 0;

  friend auto operator<=>(const ServiceExposure&,
                          const ServiceExposure&) = default;
};

struct SourcedEvent {
  int32_t day = 0;
  int32_t metric = 0;
  int32_t source = 0;

  friend auto operator<=>(const SourcedEvent&, const SourcedEvent&) = default;
};

// Indexed, immutable view of one experiment's events. Users are ordered by
// user_id; per-user days are sorted and unique. Metric values are summed per
// (user, day, metric). Construct through Ingest().
class IngestedLog {
 public:
  const ExperimentConfig& config() const { return config_; }

  size_t user_count() const { return user_ids_.size(); }
  const std::string& user_id(UserIndex u) const { return user_ids_[u]; }
  std::optional<UserIndex> FindUser(std::string_view user_id) const;
  int variant(UserIndex u) const { return variants_[u]; }
  int variant_count() const {
    return static_cast<int>(config_.variants.size());
  }

  std::span<const int32_t> trigger_days(UserIndex u) const {
    return Slice(trigger_days_, trigger_offsets_, u);
  }
  bool exposed(UserIndex u) const { return !trigger_days(u).empty(); }
  // First trigger day, or 0 for never-exposed users.
  int32_t first_trigger_day(UserIndex u) const {
    auto days = trigger_days(u);
    return days.empty() ? 0 : days.front();
  }
  bool TriggeredIn(UserIndex u, DayRange range) const;
  bool TriggeredOn(UserIndex u, int day) const;

  size_t metric_count() const { return metric_names_.size(); }
  const std::vector<std::string>& metric_names() const {
    return metric_names_;
  }
  std::optional<int> FindMetric(std::string_view metric_id) const;
  // Throws kNotFound when the metric never appears.
  int MetricIndex(std::string_view metric_id) const;
  std::span<const MetricCell> metric_cells(int metric, UserIndex u) const {
    return Slice(metric_cells_[metric], metric_offsets_[metric], u);
  }

  const std::vector<std::string>& service_names() const {
    return service_names_;
  }
  std::span<const ServiceExposure> service_exposures(UserIndex u) const {
    return Slice(service_exposures_, service_offsets_, u);
  }

  const std::vector<std::string>& source_names() const {
    return source_names_;
  }
  std::span<const SourcedEvent> sourced_events(UserIndex u) const {
    return Slice(sourced_events_, sourced_offsets_, u);
  }

  bool has_targeting() const { return has_targeting_; }
  // Users targeted on `day` (sorted); empty when the day has no record.
  std::span<const UserIndex> targeted_on(int day) const;

  int first_day() const { return config_.start_day; }
  // Declared end_day, else the last day seen in any event or target record.
  int last_day() const { return last_day_; }
  DayRange full_range() const { return DayRange{first_day(), last_day()}; }
  // [count_from_day, last_day]
  DayRange counting_range() const;

  int64_t exposure_event_count() const { return exposure_event_count_; }
  int64_t metric_event_count() const { return metric_event_count_; }
  int64_t exposed_user_count() const;
  int64_t total_trigger_days() const {
    return static_cast<int64_t>(trigger_days_.size());
  }

  friend bool operator==(const IngestedLog&, const IngestedLog&) = default;

 private:
  friend IngestedLog Ingest(std::span<const Event> events,
                            const ExperimentConfig& config);

  template <typename T>
  static std::span<const T> Slice(const std::vector<T>& data,
                                  const std::vector<int64_t>& offsets,
                                  UserIndex u) {
    return std::span<const T>(data.data() + offsets[u],
                              static_cast<size_t>(offsets[u + 1] -
                                                  offsets[u]));
  }

  ExperimentConfig config_;
  std::vector<std::string> user_ids_;
  std::vector<int32_t> variants_;
  std::vector<int64_t> trigger_offsets_;
  std::vector<int32_t> trigger_days_;
  std::vector<std::string> metric_names_;
  std::vector<std::vector<int64_t>> metric_offsets_;
  std::vector<std::vector<MetricCell>> metric_cells_;
  std::vector<std::string> service_names_;
  std::vector<int64_t> service_offsets_;
  std::vector<ServiceExposure> service_exposures_;
  std::vector<std::string> source_names_;
  std::vector<int64_t> sourced_offsets_;
  std::vector<SourcedEvent> sourced_events_;
  bool has_targeting_ = false;
  std::vector<int32_t> target_days_;
  std::vector<std::vector<UserIndex>> target_users_;
  int last_day_ = 1;
  int64_t exposure_event_count_ = 0;
  int64_t metric_event_count_ = 0;
};

// Builds the indexed log. Throws kInvalidArgument for events of another
// experiment, unknown variant labels, days outside the declared duration,
// non-finite values, or a user seen under two variants.
IngestedLog Ingest(std::span<const Event> events,
                   const ExperimentConfig& config);

}  // namespace expdiag

#endif  // EXPDIAG_DATAMODEL_H_
