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

#ifndef PREF_TEACH_CHAT_H_
#define PREF_TEACH_CHAT_H_

#include <filesystem>
#include <iosfwd>
#include <string>

#include "pref_teach/manager.h"
#include "pref_teach/model.h"

namespace pref_teach {

struct ChatOptions {
  std::string user_id = "local";
  // Print every agent step, not just the provider's lines.
  bool trace = true;
  // Finished sessions are appended here in corpus format when non-empty.
  std::filesystem::path transcript_path;
};

// Line-oriented REPL. Commands: /prefs, /export <file>, /new, /quit.
// Returns the number of completed sessions.
int run_chat(std::istream& in, std::ostream& out, DialogueManager& manager, const ModelBundle& bundle,
             PreferenceKb& kb, const ChatOptions& options);

}  // namespace pref_teach

#endif  // PREF_TEACH_CHAT_H_
