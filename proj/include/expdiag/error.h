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

#ifndef EXPDIAG_ERROR_H_
#define EXPDIAG_ERROR_H_

#include <stdexcept>
#include <string>
#include <string_view>

namespace expdiag {

enum class ErrorCode {
  kInvalidArgument,
  kParse,
  kNotFound,
  kIo,
  kSchemaMismatch,
  kInsufficientData,
  kUndefined,
  kDataIntegrity,
  kUnidentifiable,
  kInternal,
};

std::string_view ErrorCodeName(ErrorCode code);

// Every failure surfaced by the library is an Error. The code is stable and
// is what the CLI serializes into its machine-readable error object.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace expdiag

#endif  // EXPDIAG_ERROR_H_
