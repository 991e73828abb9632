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

#ifndef PREF_TEACH_TOKENIZE_H_
#define PREF_TEACH_TOKENIZE_H_

#include <string>
#include <string_view>
#include <vector>

namespace pref_teach {

// Lowercases ASCII letters, splits on whitespace and emits every ASCII
// punctuation character as its own token. Bytes >= 0x80 are kept as word
// characters so UTF-8 text passes through unchanged.
std::vector<std::string> tokenize(std::string_view text);

// Joins tokens with single spaces.
std::string join_tokens(const std::vector<std::string>& tokens);

// join_tokens(tokenize(text)); the canonical form used for catalog lookups.
std::string normalize_text(std::string_view text);

}  // namespace pref_teach

#endif  // PREF_TEACH_TOKENIZE_H_
