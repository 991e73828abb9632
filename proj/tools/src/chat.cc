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

#include "pref_teach/chat.h"

#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>

#include "pref_teach/corpus.h"
#include "pref_teach/error.h"

namespace pref_teach {
namespace {

void append_transcript(const std::filesystem::path& path, const Dialogue& d) {
  if (path.empty() || d.turns.empty()) return;
  std::ofstream out(path, std::ios::app);
  if (!out) throw Error(ErrorCode::kStorageIo, "cannot append to " + path.string());
  out << serialize_dialogue(d) << '\n';
}

void print_step(std::ostream& out, const AgentStep& step, bool trace) {
  if (trace) {
    char p[32];
    std::snprintf(p, sizeof p, "%.3f", step.confidence);
    out << "  . " << action_kind_name(step.action.kind) << ' ' << format_action(step.action) << "  [p=" << p << "]\n";
  }
  if (step.action.kind == ActionKind::kNlg) out << "agent> " << step.text << '\n';
}

}  // namespace

int run_chat(std::istream& in, std::ostream& out, DialogueManager& manager, const ModelBundle& bundle,
             PreferenceKb& kb, const ChatOptions& options) {
  int completed = 0;
  SessionState state = manager.open_session(options.user_id);
  auto finish = [&] {
    append_transcript(options.transcript_path, state.transcript);
    state = manager.open_session(options.user_id);
  };
  std::string line;
  while (true) {
    out << "you> " << std::flush;
    if (!std::getline(in, line)) break;
    if (line.empty()) continue;
    if (line == "/quit") break;
    if (line == "/prefs") {
      const auto records = kb.retrieve(options.user_id);
      if (records.empty()) out << "(no preferences)\n";
      for (const auto& r : records) {
        out << "  " << r.domain << " / " << r.entity_type << " : " << r.entity_value << " ("
            << polarity_name(r.polarity);
        if (r.condition) out << ", " << *r.condition;
        out << ")\n";
      }
      continue;
    }
    if (line == "/new") {
      finish();
      out << "(new session)\n";
      continue;
    }
    if (line.rfind("/export ", 0) == 0) {
      append_transcript(line.substr(8), state.transcript);
      out << "(transcript written)\n";
      continue;
    }
    for (const auto& step : manager.handle_utterance(state, line, bundle)) print_step(out, step, options.trace);
    if (state.phase == Phase::kEnded) {
      ++completed;
      out << "(dialogue ended)\n";
      finish();
    }
  }
  append_transcript(options.transcript_path, state.transcript);
  out << '\n';
  return completed;
}

}  // namespace pref_teach
