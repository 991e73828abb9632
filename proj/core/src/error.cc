// Copyright 2026 The pref-teach Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "pref_teach/error.h"

namespace pref_teach {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kParse: return "parse error";
    case ErrorCode::kDanglingReference: return "dangling reference";
    case ErrorCode::kInvalidArgument: return "invalid argument";
    case ErrorCode::kEmptySeed: return "empty seed set";
    case ErrorCode::kUnknownApi: return "unknown API";
    case ErrorCode::kNoCatalogValue: return "no catalog value";
    case ErrorCode::kDeadlock: return "deadlock";
    case ErrorCode::kMissingTemplate: return "missing template";
    case ErrorCode::kUnfilledSlot: return "unfilled slot";
    case ErrorCode::kInsufficientTemplates: return "insufficient templates";
    case ErrorCode::kDimensionMismatch: return "dimension mismatch";
    case ErrorCode::kMalformedTags: return "malformed tags";
    case ErrorCode::kNoLegalCandidate: return "no legal candidate";
    case ErrorCode::kSchemaMismatch: return "schema mismatch";
    case ErrorCode::kPrecondition: return "precondition violation";
    case ErrorCode::kLoopLimit: return "loop limit";
    case ErrorCode::kUnconfirmedDestructiveOp: return "unconfirmed destructive operation";
    case ErrorCode::kUnknownEntityType: return "unknown entity type";
    case ErrorCode::kStorageIo: return "storage I/O error";
    case ErrorCode::kAnnotationGap: return "annotation gap";
  }
  return "error";
}

}  // namespace pref_teach
