/*
 * Copyright 2026 The treecloak Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef TREECLOAK_ERROR_H_
#define TREECLOAK_ERROR_H_

#include <stdexcept>
#include <string>
#include <string_view>

namespace treecloak {

enum class ErrorCode {
  kInvalidArgument,
  kCapacity,
  kNoiseBudget,
  kKeyMismatch,
  kParamMismatch,
  kOutOfRange,
  kSchema,
  kLayout,
  kProtocol,
  kChecksum,
  kState,
  kIo,
};

std::string_view ErrorCodeName(ErrorCode code);

// Every module reports failures through this exception. The code lets callers
// (and the CLI exit path) distinguish contract violations from I/O trouble.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(ErrorCodeName(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline std::string_view ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid argument";
    case ErrorCode::kCapacity: return "capacity";
    case ErrorCode::kNoiseBudget: return "noise budget exhausted";
    case ErrorCode::kKeyMismatch: return "key mismatch";
    case ErrorCode::kParamMismatch: return "parameter mismatch";
    case ErrorCode::kOutOfRange: return "out of range";
    case ErrorCode::kSchema: return "schema";
    case ErrorCode::kLayout: return "layout";
    case ErrorCode::kProtocol: return "protocol";
    case ErrorCode::kChecksum: return "checksum";
    case ErrorCode::kState: return "state";
    case ErrorCode::kIo: return "io";
  }
  return "unknown";
}

}  // namespace treecloak

#endif  // TREECLOAK_ERROR_H_
