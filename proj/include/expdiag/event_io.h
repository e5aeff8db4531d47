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

#ifndef EXPDIAG_EVENT_IO_H_
#define EXPDIAG_EVENT_IO_H_

#include <filesystem>
#include <istream>
#include <ostream>
#include <vector>

#include "json.hpp"

#include "expdiag/datamodel.h"

namespace expdiag {

// Newline-delimited JSON, one event per line, discriminated by "type"
// ("exposure" | "metric"). Blank lines are skipped. Errors carry the 1-based
// line number.
std::vector<Event> ParseEvents(std::istream& in);
std::vector<Event> ReadEvents(const std::filesystem::path& path);
void WriteEvent(std::ostream& out, const Event& event);
void WriteEvents(std::ostream& out, const std::vector<Event>& events);

nlohmann::json ConfigToJson(const ExperimentConfig& config);
ExperimentConfig ConfigFromJson(const nlohmann::json& j);
// Throws kNotFound ("config not found") when the file is missing.
ExperimentConfig LoadConfig(const std::filesystem::path& path);
void SaveConfig(const ExperimentConfig& config,
                const std::filesystem::path& path);

// Whole-file helpers shared by the CLI and simulator output.
std::string ReadFile(const std::filesystem::path& path);
void WriteFile(const std::filesystem::path& path, const std::string& content);

}  // namespace expdiag

#endif  // EXPDIAG_EVENT_IO_H_
