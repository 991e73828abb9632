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

#ifndef PREF_TEACH_ERROR_H_
#define PREF_TEACH_ERROR_H_

#include <stdexcept>
#include <string>
#include <string_view>

namespace pref_teach {

enum class ErrorCode {
  kParse,
  kDanglingReference,
  kInvalidArgument,
  kEmptySeed,
  kUnknownApi,
  kNoCatalogValue,
  kDeadlock,
  kMissingTemplate,
  kUnfilledSlot,
  kInsufficientTemplates,
  kDimensionMismatch,
  kMalformedTags,
  kNoLegalCandidate,
  kSchemaMismatch,
  kPrecondition,
  kLoopLimit,
  kUnconfirmedDestructiveOp,
  kUnknownEntityType,
  kStorageIo,
  kAnnotationGap,
};

std::string_view error_code_name(ErrorCode code);

// All library failures surface as this exception; `code()` lets callers
// branch without parsing the message.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace pref_teach

#endif  // PREF_TEACH_ERROR_H_
