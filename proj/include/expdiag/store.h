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

#ifndef EXPDIAG_STORE_H_
#define EXPDIAG_STORE_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "expdiag/datamodel.h"

namespace expdiag {

// Per (experiment, variant, metric, range) user count and moments of the
// per-user metric totals.
struct RangeSummary {
  std::string experiment_id;
  std::string variant;
  std::string metric_id;
  DayRange range;
  int64_t n = 0;
  double sum = 0.0;
  double sum_sq = 0.0;

  double mean() const { return n > 0 ? sum / static_cast<double>(n) : 0.0; }
  // Unbiased sample variance; 0 when n < 2. Clamped at 0 against rounding.
  double variance() const;

  friend bool operator==(const RangeSummary&, const RangeSummary&) = default;
};

struct SummaryKey {
  std::string experiment_id;
  std::string variant;
  std::string metric_id;
  DayRange range;

  friend auto operator<=>(const SummaryKey&, const SummaryKey&) = default;
};

struct UserCountKey {
  std::string experiment_id;
  std::string variant;
  DayRange range;

  friend auto operator<=>(const UserCountKey&, const UserCountKey&) = default;
};

// Write-once map of summaries and metric-free user counts. A duplicate key
// throws kInvalidArgument.
class SummaryStore {
 public:
  static constexpr uint32_t kSchemaVersion = 1;

  void Add(const RangeSummary& summary);
  void AddUserCount(const UserCountKey& key, int64_t n);

  const RangeSummary* Find(const SummaryKey& key) const;
  // Throws kNotFound.
  const RangeSummary& Get(const SummaryKey& key) const;
  std::optional<int64_t> FindUserCount(const UserCountKey& key) const;

  const std::map<SummaryKey, RangeSummary>& summaries() const {
    return summaries_;
  }
  const std::map<UserCountKey, int64_t>& user_counts() const {
    return user_counts_;
  }
  size_t size() const { return summaries_.size(); }
  bool empty() const { return summaries_.empty() && user_counts_.empty(); }

  // Distinct experiment ids, sorted.
  std::vector<std::string> ExperimentIds() const;

  friend bool operator==(const SummaryStore&, const SummaryStore&) = default;

 private:
  std::map<SummaryKey, RangeSummary> summaries_;
  std::map<UserCountKey, int64_t> user_counts_;
};

// Binary file: magic, version, JSON header, then little-endian columns.
// Numeric fields round-trip bit for bit.
void PersistStore(const SummaryStore& store, const std::filesystem::path& path);
// Throws kIo on read failure, kSchemaMismatch on a foreign version or magic,
// kParse on a truncated body.
SummaryStore LoadStore(const std::filesystem::path& path);

}  // namespace expdiag

#endif  // EXPDIAG_STORE_H_
