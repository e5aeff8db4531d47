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

#include "expdiag/error.h"

namespace expdiag {

std::string_view ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument:
      return "invalid_argument";
    case ErrorCode::kParse:
      return "parse_error";
    case ErrorCode::kNotFound:
      return "not_found";
    case ErrorCode::kIo:
      return "io_error";
    case ErrorCode::kSchemaMismatch:
      return "schema_mismatch";
    case ErrorCode::kInsufficientData:
      return "insufficient_data";
    case ErrorCode::kUndefined:
      return "undefined";
    case ErrorCode::kDataIntegrity:
      return "data_integrity";
    case ErrorCode::kUnidentifiable:
      return "unidentifiable";
    case ErrorCode::kInternal:
      return "internal";
  }
  return "unknown";
}

}  // namespace expdiag
