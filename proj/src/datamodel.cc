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
#include <charconv>
#include <cmath>
#include <numeric>
#include <string>
#include <tuple>
#include <unordered_map>

#include "expdiag/error.h"
#include "expdiag/rng.h"

namespace expdiag {

DayRange DayRange::Make(int first, int last) {
  if (first < 1) {
    throw Error(ErrorCode::kInvalidArgument,
                "day range must start at day >= 1, got " +
                    std::to_string(first));
  }
  if (first > last) {
    throw Error(ErrorCode::kInvalidArgument,
                "invalid day range [" + std::to_string(first) + "," +
                    std::to_string(last) + "]");
  }
  return DayRange{first, last};
}

std::string DayRange::ToString() const {
  return "[" + std::to_string(first) + "," + std::to_string(last) + "]";
}

namespace {

int ParseInt(std::string_view text) {
  while (!text.empty() && text.front() == ' ') text.remove_prefix(1);
  while (!text.empty() && text.back() == ' ') text.remove_suffix(1);
  int value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(),
                                   value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw Error(ErrorCode::kParse,
                "expected an integer, got '" + std::string(text) + "'");
  }
  return value;
}

}  // namespace

DayRange ParseDayRange(std::string_view text) {
  auto comma = text.find(',');
  if (comma == std::string_view::npos) return DayRange::Single(ParseInt(text));
  return DayRange::Make(ParseInt(text.substr(0, comma)),
                        ParseInt(text.substr(comma + 1)));
}

void ExperimentConfig::Validate() const {
  auto fail = [](const std::string& msg) {
    throw Error(ErrorCode::kInvalidArgument, "invalid config: " + msg);
  };
  if (experiment_id.empty()) fail("experiment_id is empty");
  if (hash_id.empty()) fail("hash_id is empty");
  if (variants.size() < 2) fail("at least two variants are required");
  double total = 0.0;
  for (size_t i = 0; i < variants.size(); ++i) {
    const auto& v = variants[i];
    if (v.label.empty()) fail("variant label is empty");
    if (!(v.fraction > 0.0) || !std::isfinite(v.fraction)) {
      fail("allocation fraction of '" + v.label + "' must be positive");
    }
    for (size_t j = 0; j < i; ++j) {
      if (variants[j].label == v.label) fail("duplicate variant " + v.label);
    }
    total += v.fraction;
  }
  if (std::abs(total - 1.0) > 1e-9) fail("allocation fractions must sum to 1");
  if (start_day < 1) fail("start_day must be >= 1");
  if (count_from_day < start_day) fail("count_from_day must be >= start_day");
  if (end_day && *end_day < count_from_day) {
    fail("end_day must be >= count_from_day");
  }
  if (start_weekday) {
    static constexpr std::string_view kDays[] = {"mon", "tue", "wed", "thu",
                                                 "fri", "sat", "sun"};
    if (std::find(std::begin(kDays), std::end(kDays), *start_weekday) ==
        std::end(kDays)) {
      fail("start_weekday must be one of mon..sun");
    }
  }
  if (target_membership) {
    for (const auto& [day, users] : *target_membership) {
      if (day < 1) fail("target_membership day must be >= 1");
    }
  }
}

int ExperimentConfig::VariantIndex(std::string_view label) const {
  for (size_t i = 0; i < variants.size(); ++i) {
    if (variants[i].label == label) return static_cast<int>(i);
  }
  return -1;
}

std::vector<double> ExperimentConfig::Fractions() const {
  std::vector<double> out;
  out.reserve(variants.size());
  for (const auto& v : variants) out.push_back(v.fraction);
  return out;
}

int AssignVariant(const ExperimentConfig& config, std::string_view user_id) {
  uint64_t h = HashString(config.hash_id);
  h = Mix64(h ^ HashString(user_id));
  const double u = UnitInterval(h);
  double cumulative = 0.0;
  for (size_t i = 0; i + 1 < config.variants.size(); ++i) {
    cumulative += config.variants[i].fraction;
    if (u < cumulative) return static_cast<int>(i);
  }
  return static_cast<int>(config.variants.size()) - 1;
}

std::optional<UserIndex> IngestedLog::FindUser(std::string_view id) const {
  auto it = std::lower_bound(user_ids_.begin(), user_ids_.end(), id);
  if (it == user_ids_.end() || *it != id) return std::nullopt;
  return static_cast<UserIndex>(it - user_ids_.begin());
}

bool IngestedLog::TriggeredIn(UserIndex u, DayRange range) const {
  auto days = trigger_days(u);
  auto it = std::lower_bound(days.begin(), days.end(), range.first);
  return it != days.end() && *it <= range.last;
}

bool IngestedLog::TriggeredOn(UserIndex u, int day) const {
  auto days = trigger_days(u);
  return std::binary_search(days.begin(), days.end(), day);
}

std::optional<int> IngestedLog::FindMetric(std::string_view metric_id) const {
  auto it = std::lower_bound(metric_names_.begin(), metric_names_.end(),
                             metric_id);
  if (it == metric_names_.end() || *it != metric_id) return std::nullopt;
  return static_cast<int>(it - metric_names_.begin());
}

int IngestedLog::MetricIndex(std::string_view metric_id) const {
  auto m = FindMetric(metric_id);
  if (!m) {
    throw Error(ErrorCode::kNotFound,
                "metric '" + std::string(metric_id) + "' not present in log");
  }
  return *m;
}

std::span<const UserIndex> IngestedLog::targeted_on(int day) const {
  auto it = std::lower_bound(target_days_.begin(), target_days_.end(), day);
  if (it == target_days_.end() || *it != day) return {};
  return target_users_[it - target_days_.begin()];
}

DayRange IngestedLog::counting_range() const {
  return DayRange{std::min(config_.count_from_day, last_day_), last_day_};
}

int64_t IngestedLog::exposed_user_count() const {
  int64_t n = 0;
  for (size_t u = 0; u + 1 < trigger_offsets_.size(); ++u) {
    if (trigger_offsets_[u + 1] > trigger_offsets_[u]) ++n;
  }
  return n;
}

namespace {

// Interns strings into sorted, order-independent indices.
class NameTable {
 public:
  int Provisional(std::string_view name) {
    auto [it, inserted] = index_.try_emplace(name, static_cast<int>(names_.size()));
    if (inserted) names_.push_back(name);
    return it->second;
  }

  // Sorts the names; returns provisional -> final index.
  std::vector<int> Finalize(std::vector<std::string>* sorted) {
    std::vector<int> order(names_.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return names_[a] < names_[b]; });
    std::vector<int> remap(names_.size());
    sorted->clear();
    sorted->reserve(names_.size());
    for (size_t i = 0; i < order.size(); ++i) {
      remap[order[i]] = static_cast<int>(i);
      sorted->emplace_back(names_[order[i]]);
    }
    return remap;
  }

  size_t size() const { return names_.size(); }

 private:
  std::unordered_map<std::string_view, int> index_;
  std::vector<std::string_view> names_;
};

template <typename T, typename Key>
void BuildCsr(std::vector<std::pair<int32_t, T>>& rows, size_t user_count,
              Key key, std::vector<int64_t>* offsets, std::vector<T>* data) {
  std::sort(rows.begin(), rows.end(), [&](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first < b.first;
    return key(a.second) < key(b.second);
  });
  offsets->assign(user_count + 1, 0);
  data->clear();
  data->reserve(rows.size());
  for (size_t i = 0; i < rows.size(); ++i) {
    if (i > 0 && rows[i].first == rows[i - 1].first &&
        !(key(rows[i - 1].second) < key(rows[i].second))) {
      continue;  // duplicate
    }
    data->push_back(rows[i].second);
    ++(*offsets)[rows[i].first + 1];
  }
  for (size_t u = 0; u < user_count; ++u) (*offsets)[u + 1] += (*offsets)[u];
}

[[noreturn]] void Reject(const std::string& message) {
  throw Error(ErrorCode::kInvalidArgument, message);
}

}  // namespace

IngestedLog Ingest(std::span<const Event> events,
                   const ExperimentConfig& config) {
  config.Validate();

  NameTable users;
  NameTable metrics;
  NameTable services;
  NameTable sources;
  int last_day = config.start_day;

  auto check_day = [&](int day, size_t index) {
    if (day < 1) {
      Reject("event " + std::to_string(index + 1) + ": negative or zero day " +
             std::to_string(day));
    }
    if (day < config.start_day ||
        (config.end_day && day > *config.end_day)) {
      Reject("event " + std::to_string(index + 1) + ": day " +
             std::to_string(day) + " outside the experiment duration");
    }
    last_day = std::max(last_day, day);
  };

  struct RawExposure {
    int32_t user;
    int32_t day;
    int32_t variant;
    int32_t service;  // provisional index or -1
  };
  struct RawMetric {
    int32_t user;
    int32_t metric;
    int32_t day;
    double value;
    int32_t source;  // provisional index or -1
  };
  std::vector<RawExposure> exposures;
  std::vector<RawMetric> metric_rows;
  int64_t exposure_count = 0;
  int64_t metric_count = 0;

  for (size_t i = 0; i < events.size(); ++i) {
    if (const auto* e = std::get_if<ExposureEvent>(&events[i])) {
      if (e->experiment_id != config.experiment_id) {
        Reject("event " + std::to_string(i + 1) + ": unknown experiment_id '" +
               e->experiment_id + "' (config is for '" + config.experiment_id +
               "')");
      }
      if (e->user_id.empty()) {
        Reject("event " + std::to_string(i + 1) + ": empty user_id");
      }
      const int variant = config.VariantIndex(e->variant);
      if (variant < 0) {
        Reject("event " + std::to_string(i + 1) + ": unknown variant '" +
               e->variant + "'");
      }
      check_day(e->day, i);
      exposures.push_back(
          {users.Provisional(e->user_id), e->day, variant,
           e->service_tag ? services.Provisional(*e->service_tag) : -1});
      ++exposure_count;
    } else {
      const auto& m = std::get<MetricEvent>(events[i]);
      if (m.user_id.empty()) {
        Reject("event " + std::to_string(i + 1) + ": empty user_id");
      }
      if (m.metric_id.empty()) {
        Reject("event " + std::to_string(i + 1) + ": empty metric_id");
      }
      if (!std::isfinite(m.value)) {
        Reject("event " + std::to_string(i + 1) + ": non-finite metric value");
      }
      check_day(m.day, i);
      metric_rows.push_back(
          {users.Provisional(m.user_id), metrics.Provisional(m.metric_id),
           m.day, m.value,
           m.source_tag ? sources.Provisional(*m.source_tag) : -1});
      ++metric_count;
    }
  }
  if (config.target_membership) {
    for (const auto& [day, ids] : *config.target_membership) {
      if (config.end_day && day > *config.end_day) {
        Reject("target_membership day " + std::to_string(day) +
               " outside the experiment duration");
      }
      last_day = std::max(last_day, day);
      for (const auto& id : ids) users.Provisional(id);
    }
  }

  IngestedLog log;
  log.config_ = config;
  const std::vector<int> user_map = users.Finalize(&log.user_ids_);
  const std::vector<int> metric_map = metrics.Finalize(&log.metric_names_);
  const std::vector<int> service_map = services.Finalize(&log.service_names_);
  const std::vector<int> source_map = sources.Finalize(&log.source_names_);
  const size_t n_users = log.user_ids_.size();

  log.variants_.assign(n_users, -1);
  std::vector<std::pair<int32_t, int32_t>> trigger_rows;
  std::vector<std::pair<int32_t, ServiceExposure>> service_rows;
  trigger_rows.reserve(exposures.size());
  for (const auto& e : exposures) {
    const int32_t u = user_map[e.user];
    if (log.variants_[u] >= 0 && log.variants_[u] != e.variant) {
      Reject("user '" + log.user_ids_[u] + "' exposed under two variants ('" +
             config.variants[log.variants_[u]].label + "' and '" +
             config.variants[e.variant].label + "')");
    }
    log.variants_[u] = e.variant;
    trigger_rows.emplace_back(u, e.day);
    if (e.service >= 0) {
      service_rows.emplace_back(u, ServiceExposure{e.day, service_map[e.service]});
    }
  }
  for (size_t u = 0; u < n_users; ++u) {
    if (log.variants_[u] < 0) {
      log.variants_[u] = AssignVariant(config, log.user_ids_[u]);
    }
  }
  auto identity = [](const auto& x) { return x; };
  BuildCsr(trigger_rows, n_users, identity, &log.trigger_offsets_,
           &log.trigger_days_);
  BuildCsr(service_rows, n_users, identity, &log.service_offsets_,
           &log.service_exposures_);

  // Per-(user, day, metric) values are summed in sorted value order so the
  // result does not depend on event order.
  const size_t n_metrics = log.metric_names_.size();
  std::vector<std::vector<std::tuple<int32_t, int32_t, double>>> per_metric(
      n_metrics);
  std::vector<std::pair<int32_t, SourcedEvent>> sourced_rows;
  for (const auto& m : metric_rows) {
    const int32_t u = user_map[m.user];
    const int32_t metric = metric_map[m.metric];
    per_metric[metric].emplace_back(u, m.day, m.value);
    if (m.source >= 0) {
      sourced_rows.emplace_back(
          u, SourcedEvent{m.day, metric, source_map[m.source]});
    }
  }
  log.metric_offsets_.resize(n_metrics);
  log.metric_cells_.resize(n_metrics);
  for (size_t metric = 0; metric < n_metrics; ++metric) {
    auto& rows = per_metric[metric];
    std::sort(rows.begin(), rows.end());
    auto& offsets = log.metric_offsets_[metric];
    auto& cells = log.metric_cells_[metric];
    offsets.assign(n_users + 1, 0);
    for (size_t i = 0; i < rows.size(); ++i) {
      const auto& [u, day, value] = rows[i];
      if (i > 0 && std::get<0>(rows[i - 1]) == u &&
          std::get<1>(rows[i - 1]) == day) {
        cells.back().value += value;
        continue;
      }
      cells.push_back({day, value});
      ++offsets[u + 1];
    }
    for (size_t u = 0; u < n_users; ++u) offsets[u + 1] += offsets[u];
  }
  BuildCsr(sourced_rows, n_users, identity, &log.sourced_offsets_,
           &log.sourced_events_);

  if (config.target_membership) {
    log.has_targeting_ = true;
    for (const auto& [day, ids] : *config.target_membership) {
      std::vector<UserIndex> members;
      members.reserve(ids.size());
      for (const auto& id : ids) members.push_back(*log.FindUser(id));
      std::sort(members.begin(), members.end());
      members.erase(std::unique(members.begin(), members.end()),
                    members.end());
      log.target_days_.push_back(day);
      log.target_users_.push_back(std::move(members));
    }
  }

  log.last_day_ = config.end_day ? *config.end_day : last_day;
  log.exposure_event_count_ = exposure_count;
  log.metric_event_count_ = metric_count;
  return log;
}

}  // namespace expdiag
