// Copyright 2026 The simjudge Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace simjudge {

// Numeric values are part of the C ABI (see simjudge.h); append only.
enum class ErrorCode : int {
  kOk = 0,
  kInvalidArgument = 1,
  kIo = 2,
  kMalformedRecord = 3,
  kSchemaViolation = 4,
  kDuplicateId = 5,
  kUnknownScenario = 6,
  kUnboundPlaceholder = 7,
  kEmptyQuestionSet = 8,
  kNoCodeBlock = 9,
  kExhausted = 10,
  kAuthFailure = 11,
  kNonRetryable = 12,
  kNotAContainer = 13,
  kTruncated = 14,
  kProbeFailure = 15,
  kDecodeFailure = 16,
  kParseFailure = 17,
  kEmptyLabels = 18,
  kGroupTooSmall = 19,
  kInvalidClipBounds = 20,
  kEmptyRun = 21,
  kEmptyCounts = 22,
  kLedgerCorrupt = 23,
  kConfig = 24,
  kAborted = 25,
  kUnavailable = 26,
  kInternal = 27,
};

std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, std::string field = {})
      : std::runtime_error(message), code_(code), field_(std::move(field)) {}

  ErrorCode code() const noexcept { return code_; }
  // Name of the offending field for schema-style errors, empty otherwise.
  const std::string& field() const noexcept { return field_; }

 private:
  ErrorCode code_;
  std::string field_;
};

}  // namespace simjudge
