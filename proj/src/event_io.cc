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

#include "expdiag/event_io.h"

#include <fstream>
#include <sstream>
#include <string>

#include "expdiag/error.h"

namespace expdiag {

namespace {

using nlohmann::json;

std::optional<std::string> OptionalString(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<std::string>();
}

Event EventFromJson(const json& j) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "exposure") {
    ExposureEvent e;
    e.user_id = j.at("user_id").get<std::string>();
    e.experiment_id = j.at("experiment_id").get<std::string>();
    e.variant = j.at("variant").get<std::string>();
    e.day = j.at("day").get<int>();
    e.service_tag = OptionalString(j, "service_tag");
    return e;
  }
  if (type == "metric") {
    MetricEvent m;
    m.user_id = j.at("user_id").get<std::string>();
    m.day = j.at("day").get<int>();
    m.metric_id = j.at("metric_id").get<std::string>();
    m.value = j.at("value").get<double>();
    m.source_tag = OptionalString(j, "source_tag");
    return m;
  }
  throw Error(ErrorCode::kParse, "unknown event type '" + type + "'");
}

}  // namespace

std::vector<Event> ParseEvents(std::istream& in) {
  std::vector<Event> events;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      events.push_back(EventFromJson(json::parse(line)));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kParse, "line " + std::to_string(line_no) +
                                         ": malformed event: " + e.what());
    } catch (const Error& e) {
      throw Error(e.code(), "line " + std::to_string(line_no) + ": " +
                                e.what());
    }
  }
  return events;
}

std::vector<Event> ReadEvents(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorCode::kNotFound,
                "events not found: " + path.string());
  }
  return ParseEvents(in);
}

void WriteEvent(std::ostream& out, const Event& event) {
  json j;
  if (const auto* e = std::get_if<ExposureEvent>(&event)) {
    j = {{"type", "exposure"},
         {"user_id", e->user_id},
         {"experiment_id", e->experiment_id},
         {"variant", e->variant},
         {"day", e->day}};
    if (e->service_tag) j["service_tag"] = *e->service_tag;
  } else {
    const auto& m = std::get<MetricEvent>(event);
    j = {{"type", "metric"},
         {"user_id", m.user_id},
         {"day", m.day},
         {"metric_id", m.metric_id},
         {"value", m.value}};
    if (m.source_tag) j["source_tag"] = *m.source_tag;
  }
  out << j.dump() << '\n';
}

void WriteEvents(std::ostream& out, const std::vector<Event>& events) {
  for (const auto& e : events) WriteEvent(out, e);
}

nlohmann::json ConfigToJson(const ExperimentConfig& config) {
  json j;
  j["experiment_id"] = config.experiment_id;
  j["hash_id"] = config.hash_id;
  json variants = json::array();
  for (const auto& v : config.variants) {
    variants.push_back({{"label", v.label}, {"fraction", v.fraction}});
  }
  j["variants"] = std::move(variants);
  j["start_day"] = config.start_day;
  j["count_from_day"] = config.count_from_day;
  if (config.end_day) j["end_day"] = *config.end_day;
  if (config.start_weekday) j["start_weekday"] = *config.start_weekday;
  if (config.target_membership) {
    json members = json::object();
    for (const auto& [day, users] : *config.target_membership) {
      members[std::to_string(day)] = users;
    }
    j["target_membership"] = std::move(members);
  }
  return j;
}

ExperimentConfig ConfigFromJson(const nlohmann::json& j) {
  ExperimentConfig config;
  try {
    config.experiment_id = j.at("experiment_id").get<std::string>();
    config.hash_id = j.value("hash_id", config.experiment_id);
    for (const auto& v : j.at("variants")) {
      config.variants.push_back(
          {v.at("label").get<std::string>(), v.at("fraction").get<double>()});
    }
    config.start_day = j.value("start_day", 1);
    config.count_from_day = j.value("count_from_day", config.start_day);
    if (j.contains("end_day") && !j["end_day"].is_null()) {
      config.end_day = j["end_day"].get<int>();
    }
    config.start_weekday = OptionalString(j, "start_weekday");
    if (j.contains("target_membership") && !j["target_membership"].is_null()) {
      std::map<int, std::vector<std::string>> members;
      for (const auto& [day, users] : j["target_membership"].items()) {
        members[std::stoi(day)] = users.get<std::vector<std::string>>();
      }
      config.target_membership = std::move(members);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("malformed config: ") +
                                       e.what());
  } catch (const std::invalid_argument&) {
    throw Error(ErrorCode::kParse,
                "malformed config: target_membership keys must be days");
  }
  config.Validate();
  return config;
}

ExperimentConfig LoadConfig(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw Error(ErrorCode::kNotFound, "config not found: " + path.string());
  }
  json j;
  try {
    j = json::parse(ReadFile(path));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, "malformed config " + path.string() +
                                       ": " + e.what());
  }
  return ConfigFromJson(j);
}

void SaveConfig(const ExperimentConfig& config,
                const std::filesystem::path& path) {
  WriteFile(path, ConfigToJson(config).dump(2) + "\n");
}

std::string ReadFile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kNotFound, "not found: " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void WriteFile(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << content;
  if (!out) throw Error(ErrorCode::kIo, "write failed: " + path.string());
}

}  // namespace expdiag
