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

#ifndef EXPDIAG_TOOLS_CLI_H_
#define EXPDIAG_TOOLS_CLI_H_

#include <ostream>
#include <string>
#include <vector>

namespace expdiag::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFlagged = 1;
inline constexpr int kExitError = 2;

inline constexpr int kReportSchemaVersion = 1;

// Runs one command. `args` excludes the program name. Errors are written to
// `err` as a JSON object and give kExitError.
int Run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err);

// Hex SHA-256 of a file's bytes.
std::string FileDigest(const std::string& path);

}  // namespace expdiag::cli

#endif  // EXPDIAG_TOOLS_CLI_H_
