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

#include "simjudge/error.hpp"

namespace simjudge {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kOk: return "Ok";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kIo: return "Io";
    case ErrorCode::kMalformedRecord: return "MalformedRecord";
    case ErrorCode::kSchemaViolation: return "SchemaViolation";
    case ErrorCode::kDuplicateId: return "DuplicateId";
    case ErrorCode::kUnknownScenario: return "UnknownScenario";
    case ErrorCode::kUnboundPlaceholder: return "UnboundPlaceholder";
    case ErrorCode::kEmptyQuestionSet: return "EmptyQuestionSet";
    case ErrorCode::kNoCodeBlock: return "NoCodeBlock";
    case ErrorCode::kExhausted: return "Exhausted";
    case ErrorCode::kAuthFailure: return "AuthFailure";
    case ErrorCode::kNonRetryable: return "NonRetryable";
    case ErrorCode::kNotAContainer: return "NotAContainer";
    case ErrorCode::kTruncated: return "Truncated";
    case ErrorCode::kProbeFailure: return "ProbeFailure";
    case ErrorCode::kDecodeFailure: return "DecodeFailure";
    case ErrorCode::kParseFailure: return "ParseFailure";
    case ErrorCode::kEmptyLabels: return "EmptyLabels";
    case ErrorCode::kGroupTooSmall: return "GroupTooSmall";
    case ErrorCode::kInvalidClipBounds: return "InvalidClipBounds";
    case ErrorCode::kEmptyRun: return "EmptyRun";
    case ErrorCode::kEmptyCounts: return "EmptyCounts";
    case ErrorCode::kLedgerCorrupt: return "LedgerCorrupt";
    case ErrorCode::kConfig: return "Config";
    case ErrorCode::kAborted: return "Aborted";
    case ErrorCode::kUnavailable: return "Unavailable";
    case ErrorCode::kInternal: return "Internal";
  }
  return "Unknown";
}

}  // namespace simjudge
