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

#include "expdiag/store.h"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <set>

#include "json.hpp"

#include "expdiag/error.h"

namespace expdiag {

namespace {

constexpr char kMagic[8] = {'X', 'D', 'I', 'A', 'G', 'S', 'T', 'O'};

void PutU32(std::string* out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out->push_back(static_cast<char>(v >> (8 * i)));
}

void PutU64(std::string* out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out->push_back(static_cast<char>(v >> (8 * i)));
}

uint64_t GetLe(const std::string& in, size_t pos, int bytes) {
  uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) {
    v |= static_cast<uint64_t>(static_cast<unsigned char>(in[pos + i]))
         << (8 * i);
  }
  return v;
}

}  // namespace

double RangeSummary::variance() const {
  if (n < 2) return 0.0;
  const double nn = static_cast<double>(n);
  return std::max(0.0, (sum_sq - sum * sum / nn) / (nn - 1.0));
}

void SummaryStore::Add(const RangeSummary& summary) {
  SummaryKey key{summary.experiment_id, summary.variant, summary.metric_id,
                 summary.range};
  if (!summaries_.emplace(std::move(key), summary).second) {
    throw Error(ErrorCode::kInvalidArgument,
                "summary already stored for " + summary.experiment_id + "/" +
                    summary.variant + "/" + summary.metric_id + " " +
                    summary.range.ToString());
  }
}

void SummaryStore::AddUserCount(const UserCountKey& key, int64_t n) {
  if (!user_counts_.emplace(key, n).second) {
    throw Error(ErrorCode::kInvalidArgument,
                "user count already stored for " + key.experiment_id + "/" +
                    key.variant + " " + key.range.ToString());
  }
}

const RangeSummary* SummaryStore::Find(const SummaryKey& key) const {
  auto it = summaries_.find(key);
  return it == summaries_.end() ? nullptr : &it->second;
}

const RangeSummary& SummaryStore::Get(const SummaryKey& key) const {
  const RangeSummary* s = Find(key);
  if (s == nullptr) {
    throw Error(ErrorCode::kNotFound,
                "no summary for " + key.experiment_id + "/" + key.variant +
                    "/" + key.metric_id + " " + key.range.ToString());
  }
  return *s;
}

std::optional<int64_t> SummaryStore::FindUserCount(
    const UserCountKey& key) const {
  auto it = user_counts_.find(key);
  if (it == user_counts_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::string> SummaryStore::ExperimentIds() const {
  std::set<std::string> ids;
  for (const auto& [key, s] : summaries_) ids.insert(key.experiment_id);
  for (const auto& [key, n] : user_counts_) ids.insert(key.experiment_id);
  return {ids.begin(), ids.end()};
}

void PersistStore(const SummaryStore& store,
                  const std::filesystem::path& path) {
  nlohmann::json header;
  header["schema_version"] = SummaryStore::kSchemaVersion;
  header["columns"] = {"experiment_id", "variant", "metric_id", "first",
                       "last",          "n",       "sum",       "sum_sq"};
  nlohmann::json rows = nlohmann::json::array();
  std::string body;
  body.reserve(store.size() * 16);
  for (const auto& [key, s] : store.summaries()) {
    rows.push_back({s.experiment_id, s.variant, s.metric_id, s.range.first,
                    s.range.last, s.n});
    PutU64(&body, std::bit_cast<uint64_t>(s.sum));
    PutU64(&body, std::bit_cast<uint64_t>(s.sum_sq));
  }
  header["summaries"] = std::move(rows);
  nlohmann::json counts = nlohmann::json::array();
  for (const auto& [key, n] : store.user_counts()) {
    counts.push_back(
        {key.experiment_id, key.variant, key.range.first, key.range.last, n});
  }
  header["user_counts"] = std::move(counts);

  const std::string header_text = header.dump();
  std::string out(kMagic, sizeof(kMagic));
  PutU32(&out, SummaryStore::kSchemaVersion);
  PutU32(&out, static_cast<uint32_t>(header_text.size()));
  out += header_text;
  out += body;

  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) {
    throw Error(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  }
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw Error(ErrorCode::kIo, "write failed: " + path.string());
}

SummaryStore LoadStore(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::string in((std::istreambuf_iterator<char>(file)),
                 std::istreambuf_iterator<char>());
  if (in.size() < 16 || std::memcmp(in.data(), kMagic, sizeof(kMagic)) != 0) {
    throw Error(ErrorCode::kSchemaMismatch,
                path.string() + " is not a summary store");
  }
  const auto version = static_cast<uint32_t>(GetLe(in, 8, 4));
  if (version != SummaryStore::kSchemaVersion) {
    throw Error(ErrorCode::kSchemaMismatch,
                "store schema version " + std::to_string(version) +
                    ", expected " +
                    std::to_string(SummaryStore::kSchemaVersion));
  }
  const auto header_len = static_cast<size_t>(GetLe(in, 12, 4));
  if (in.size() < 16 + header_len) {
    throw Error(ErrorCode::kParse, "truncated store header");
  }
  SummaryStore store;
  try {
    const auto header = nlohmann::json::parse(in.substr(16, header_len));
    if (header.at("schema_version").get<uint32_t>() != version) {
      throw Error(ErrorCode::kSchemaMismatch, "store header version mismatch");
    }
    const auto& rows = header.at("summaries");
    size_t pos = 16 + header_len;
    if (in.size() != pos + rows.size() * 16) {
      throw Error(ErrorCode::kParse, "store body length mismatch");
    }
    for (const auto& row : rows) {
      RangeSummary s;
      s.experiment_id = row.at(0).get<std::string>();
      s.variant = row.at(1).get<std::string>();
      s.metric_id = row.at(2).get<std::string>();
      s.range = DayRange::Make(row.at(3).get<int>(), row.at(4).get<int>());
      s.n = row.at(5).get<int64_t>();
      s.sum = std::bit_cast<double>(GetLe(in, pos, 8));
      s.sum_sq = std::bit_cast<double>(GetLe(in, pos + 8, 8));
      pos += 16;
      store.Add(s);
    }
    for (const auto& row : header.at("user_counts")) {
      store.AddUserCount(
          {row.at(0).get<std::string>(), row.at(1).get<std::string>(),
           DayRange::Make(row.at(2).get<int>(), row.at(3).get<int>())},
          row.at(4).get<int64_t>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("malformed store header: ") +
                                       e.what());
  }
  return store;
}

}  // namespace expdiag
