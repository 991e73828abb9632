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

#ifndef PREF_TEACH_MANAGER_H_
#define PREF_TEACH_MANAGER_H_

#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "pref_teach/context.h"
#include "pref_teach/domain.h"
#include "pref_teach/model.h"
#include "pref_teach/predictor.h"
#include "pref_teach/preference_kb.h"
#include "pref_teach/schema.h"

namespace pref_teach {

enum class Phase { kAwaitUser, kAgentActing, kEnded };

std::string_view phase_name(Phase phase);

// What an executed API call produced.
struct ApiOutcome {
  std::string api;
  std::string handle;
  bool empty = false;
  int applied = 0;
  std::string kb_op;
  std::vector<PreferenceRecord> records;  // retrieve results
  // Entity values the call was made with, by argument name.
  std::map<std::string, std::string> values;
};

struct AgentStep {
  ActionRecord action;
  double confidence = 0.0;
  std::vector<ActionScore> n_best;
  // KB operation performed ("upsert", "delete", ...), empty for none.
  std::string kb_op;
  int kb_applied = 0;
  // Rendered text; non-empty for NLG steps.
  std::string text;

  nlohmann::json to_json() const;
};

struct SessionState {
  std::string session_id;
  std::string user_id;
  ContextStore context;
  Phase phase = Phase::kAwaitUser;
  std::map<std::string, ApiOutcome> results;
  std::map<std::string, int> handle_counters;
  // Everything said and done so far, in corpus record form.
  Dialogue transcript;
  // Lazily created when driven by a bundle.
  std::unique_ptr<Predictor> predictor;
};

// Steps a hand-back appends: a clarification and a wait.
inline constexpr int kHandBackSteps = 2;

struct ManagerConfig {
  // Upper bound on the steps one seeker turn produces, hand-back included.
  int max_agent_steps = 16;
  // Below this top-1 probability the agent asks for clarification.
  double min_confidence = 0.3;
  int n_best = 4;
};

// The turn loop: NER on the utterance, then predict / fill / execute
// until the model hands control back.
class DialogueManager {
 public:
  DialogueManager(const DomainSchema& schema, PreferenceKb& kb, ManagerConfig config = {});

  SessionState open_session(const std::string& user_id) const;

  // Throws Error(kPrecondition) unless the session awaits the user.
  std::vector<AgentStep> handle_utterance(SessionState& state, const std::string& text, Predictor& predictor);
  // Uses (and caches in the session) a ModelPredictor over `bundle`.
  std::vector<AgentStep> handle_utterance(SessionState& state, const std::string& text, const ModelBundle& bundle);

  // Maps the call onto the KB. Throws Error(kUnknownApi) for names that are
  // not API signatures and Error(kUnconfirmedDestructiveOp) when a
  // destructive call lacks its confirmation binding.
  ApiOutcome execute_api(const ActionRecord& action, const std::string& user_id);

  // Provider text for an NLG action in the session's state.
  std::string render(const ActionRecord& action, const SessionState& state) const;

  const DomainSchema& schema() const { return schema_; }
  const ManagerConfig& config() const { return config_; }

 private:
  AgentStep clarify(SessionState& state, std::vector<ActionScore> n_best);
  void record(SessionState& state, const ActionRecord& action);

  const DomainSchema& schema_;
  PreferenceKb& kb_;
  ManagerConfig config_;
};

// Formats records as "yankees (sports, like), ..." or "nothing yet".
std::string describe_preferences(const std::vector<PreferenceRecord>& records);

}  // namespace pref_teach

#endif  // PREF_TEACH_MANAGER_H_
