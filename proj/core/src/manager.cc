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

#include "pref_teach/manager.h"

#include <atomic>
#include <cstdio>
#include <random>

#include "pref_teach/corpus.h"
#include "pref_teach/error.h"
#include "pref_teach/tokenize.h"

namespace pref_teach {
namespace {

std::string new_session_id() {
  static std::atomic<std::uint64_t> counter{0};
  static const std::uint64_t salt = [] {
    std::random_device rd;
    return (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
  }();
  char buf[40];
  std::snprintf(buf, sizeof buf, "s-%08llx-%llu", static_cast<unsigned long long>(salt & 0xffffffffULL),
                static_cast<unsigned long long>(++counter));
  return buf;
}

bool is_confirmation_type(const DomainSchema& schema, const std::string& type) {
  const EntityTypeDef* t = schema.find_entity_type(type);
  return t != nullptr && t->role == EntityRole::kConfirmation;
}

}  // namespace

std::string_view phase_name(Phase phase) {
  switch (phase) {
    case Phase::kAwaitUser:
      return "await_user";
    case Phase::kAgentActing:
      return "agent_acting";
    case Phase::kEnded:
      return "ended";
  }
  return "await_user";
}

nlohmann::json AgentStep::to_json() const {
  nlohmann::json nb = nlohmann::json::array();
  for (const auto& s : n_best) nb.push_back({{"name", s.name}, {"probability", s.probability}});
  nlohmann::json args = nlohmann::json::object();
  for (const auto& [name, b] : action.args) {
    switch (b.source) {
      case BindingSource::kSeekerEntity:
        args[name] = b.value;
        break;
      case BindingSource::kApiResult:
        args[name] = b.result_ref;
        break;
      case BindingSource::kConstant:
        args[name] = b.literal;
        break;
    }
  }
  nlohmann::json j = {{"kind", action_kind_name(action.kind)},
                      {"name", action.name},
                      {"args", args},
                      {"confidence", confidence},
                      {"n_best", nb},
                      {"text", text}};
  if (action.result_ref) j["result"] = *action.result_ref;
  if (action.kind == ActionKind::kApi) j["empty_result"] = action.empty_result;
  if (!kb_op.empty()) j["kb"] = {{"op", kb_op}, {"applied", kb_applied}};
  return j;
}

std::string describe_preferences(const std::vector<PreferenceRecord>& records) {
  if (records.empty()) return "nothing yet";
  std::string out;
  for (const auto& r : records) {
    if (!out.empty()) out += ", ";
    out += r.entity_value + " (" + r.domain + ", " + std::string(polarity_name(r.polarity));
    if (r.condition) out += " for " + *r.condition;
    out += ")";
  }
  return out;
}

DialogueManager::DialogueManager(const DomainSchema& schema, PreferenceKb& kb, ManagerConfig config)
    : schema_(schema), kb_(kb), config_(config) {
  if (config_.max_agent_steps < kHandBackSteps + 1) {
    throw Error(ErrorCode::kInvalidArgument, "max_agent_steps must be >= " + std::to_string(kHandBackSteps + 1));
  }
}

SessionState DialogueManager::open_session(const std::string& user_id) const {
  SessionState s;
  s.session_id = new_session_id();
  s.user_id = user_id;
  s.transcript.id = s.session_id;
  return s;
}

ApiOutcome DialogueManager::execute_api(const ActionRecord& action, const std::string& user_id) {
  const ActionSignature* sig = schema_.find_signature(action.name);
  if (sig == nullptr || sig->kind != ActionKind::kApi) {
    throw Error(ErrorCode::kUnknownApi, "'" + action.name + "' is not an API");
  }
  ApiOutcome out;
  out.api = sig->name;
  for (const auto& [name, b] : action.args) {
    if (b.source == BindingSource::kSeekerEntity) out.values[name] = b.value;
    if (b.source == BindingSource::kConstant) out.values[name] = b.literal;
  }
  if (sig->destructive) {
    bool confirmed = false;
    for (const auto& arg : sig->arguments) {
      if (!is_confirmation_type(schema_, arg.type)) continue;
      auto it = action.args.find(arg.name);
      confirmed = confirmed || (it != action.args.end() && it->second.source != BindingSource::kApiResult);
    }
    if (!confirmed) {
      throw Error(ErrorCode::kUnconfirmedDestructiveOp, action.name + " needs a bound confirmation");
    }
  }
  for (const auto& arg : sig->arguments) {
    if (arg.required && action.args.count(arg.name) == 0) {
      throw Error(ErrorCode::kPrecondition, action.name + " is missing argument '" + arg.name + "'");
    }
  }
  auto value_of = [&](const std::string& arg) -> std::string {
    auto it = out.values.find(arg);
    return it == out.values.end() ? std::string() : it->second;
  };
  const KbMapping& kb = sig->kb;
  out.kb_op = std::string(kb_op_name(kb.op));
  switch (kb.op) {
    case KbOp::kNone:
      out.kb_op.clear();
      break;
    case KbOp::kUpsert: {
      std::optional<std::string> cond;
      if (!kb.condition_argument.empty()) cond = value_of(kb.condition_argument);
      out.applied = kb_.update(
          user_id, {PreferenceDelta::upsert(kb.domain, kb.entity_type, value_of(kb.value_argument), kb.polarity, cond)});
      break;
    }
    case KbOp::kDelete:
      out.applied = kb_.update(user_id, {PreferenceDelta::remove(kb.domain, kb.entity_type, value_of(kb.value_argument))});
      out.empty = out.applied == 0;
      break;
    case KbOp::kDeleteAll:
      out.applied = kb_.update(user_id, {PreferenceDelta::delete_all()});
      out.empty = out.applied == 0;
      break;
    case KbOp::kRetrieve: {
      RetrieveFilter f;
      if (!kb.domain.empty()) f.domain = kb.domain;
      if (!kb.entity_type.empty()) f.entity_type = kb.entity_type;
      out.records = kb_.retrieve(user_id, f);
      out.empty = out.records.empty();
      break;
    }
  }
  return out;
}

std::string DialogueManager::render(const ActionRecord& action, const SessionState& state) const {
  std::map<std::string, std::string> fill;
  for (const auto& [name, b] : action.args) {
    if (b.source == BindingSource::kSeekerEntity) {
      fill[name] = b.value;
      continue;
    }
    if (b.source == BindingSource::kConstant) {
      fill[name] = b.literal;
      continue;
    }
    auto it = state.results.find(b.result_ref);
    if (it == state.results.end()) continue;
    const ApiOutcome& r = it->second;
    fill["preferences"] = describe_preferences(r.records);
    if (const ActionSignature* producer = schema_.find_signature(r.api)) {
      auto v = r.values.find(producer->kb.value_argument);
      if (v != r.values.end()) fill["value"] = v->second;
      auto c = r.values.find(producer->kb.condition_argument);
      if (c != r.values.end()) fill["condition"] = c->second;
    }
  }
  const auto templates = schema_.provider_templates_for(action.name);
  std::string text;
  if (templates.empty()) {
    text = action.name;
  } else {
    const std::string& tpl = templates.front()->text;
    for (std::size_t i = 0; i < tpl.size(); ++i) {
      if (tpl[i] == '{') {
        const std::size_t close = tpl.find('}', i);
        if (close != std::string::npos) {
          auto it = fill.find(tpl.substr(i + 1, close - i - 1));
          text += it == fill.end() ? std::string() : it->second;
          i = close;
          continue;
        }
      }
      text += tpl[i];
    }
  }
  return text;
}

void DialogueManager::record(SessionState& state, const ActionRecord& action) {
  state.context.record(action);
  state.transcript.turns.back().provider_actions.push_back(action);
}

AgentStep DialogueManager::clarify(SessionState& state, std::vector<ActionScore> n_best) {
  AgentStep step;
  step.action.kind = ActionKind::kNlg;
  step.action.name = std::string(kFallbackClarification);
  step.n_best = std::move(n_best);
  step.confidence = step.n_best.empty() ? 0.0 : step.n_best.front().probability;
  step.text = render(step.action, state);
  if (step.text.empty()) step.text = "Sorry, could you rephrase that?";
  record(state, step.action);
  return step;
}

std::vector<AgentStep> DialogueManager::handle_utterance(SessionState& state, const std::string& text,
                                                         const ModelBundle& bundle) {
  if (!state.predictor) state.predictor = std::make_unique<ModelPredictor>(bundle);
  return handle_utterance(state, text, *state.predictor);
}

std::vector<AgentStep> DialogueManager::handle_utterance(SessionState& state, const std::string& text,
                                                         Predictor& predictor) {
  if (state.phase != Phase::kAwaitUser) {
    throw Error(ErrorCode::kPrecondition,
                "session " + state.session_id + " is " + std::string(phase_name(state.phase)) + ", not awaiting input");
  }
  state.phase = Phase::kAgentActing;
  std::vector<AgentStep> steps;
  auto hand_back = [&](std::vector<ActionScore> n_best) {
    steps.push_back(clarify(state, std::move(n_best)));
    AgentStep wait;
    wait.action.kind = ActionKind::kSys;
    wait.action.name = std::string(kWaitForUserInput);
    wait.confidence = 1.0;
    record(state, wait.action);
    steps.push_back(std::move(wait));
    state.phase = Phase::kAwaitUser;
  };

  const int turn = static_cast<int>(state.context.context().utterances.size());
  Utterance utt = Utterance::from_text(text);
  std::vector<EntityMention> mentions = predictor.recognize(utt.tokens, turn);
  Turn t;
  t.seeker_utterance = utt;
  t.seeker_entities = mentions;
  state.transcript.turns.push_back(std::move(t));
  state.context.begin_turn(utt.tokens, std::move(mentions));

  // Room stays reserved for the clarification and the wait.
  for (int k = 0; k < config_.max_agent_steps - kHandBackSteps; ++k) {
    const DialogueContext& ctx = state.context.context();
    std::vector<ActionScore> ranked = predictor.predict_actions(ctx, config_.n_best);
    if (ranked.empty() || ranked.front().probability < config_.min_confidence) {
      hand_back(std::move(ranked));
      return steps;
    }
    const ActionSignature* sig = schema_.find_signature(ranked.front().name);
    if (sig == nullptr) {
      hand_back(std::move(ranked));
      return steps;
    }
    AgentStep step;
    step.n_best = ranked;
    step.confidence = ranked.front().probability;
    step.action.kind = sig->kind;
    step.action.name = sig->name;

    bool unfilled = false;
    for (const auto& arg : sig->arguments) {
      if (schema_.is_result_type(arg.type)) {
        if (auto ref = latest_result(ctx, arg.type, schema_)) {
          step.action.args[arg.name] = ArgumentBinding::api_result(*ref);
        } else if (arg.required) {
          unfilled = true;
        }
        continue;
      }
      try {
        const int idx = predictor.fill_argument(ctx, sig->name, arg);
        const ContextEntity& e = ctx.entities.at(static_cast<std::size_t>(idx));
        step.action.args[arg.name] =
            ArgumentBinding::seeker_entity(e.turn, e.mention.start, e.mention.end, e.mention.value);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kNoLegalCandidate) throw;
        if (arg.required) unfilled = true;
      }
    }
    if (unfilled) {
      hand_back(std::move(ranked));
      return steps;
    }

    if (sig->kind == ActionKind::kApi) {
      ApiOutcome outcome;
      try {
        outcome = execute_api(step.action, state.user_id);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kUnconfirmedDestructiveOp) throw;
        hand_back(std::move(ranked));
        return steps;
      }
      outcome.handle = sig->result_name + std::to_string(++state.handle_counters[sig->result_name]);
      step.action.result_ref = outcome.handle;
      step.action.empty_result = outcome.empty;
      step.kb_op = outcome.kb_op;
      step.kb_applied = outcome.applied;
      state.results[outcome.handle] = std::move(outcome);
    } else if (sig->kind == ActionKind::kNlg) {
      step.text = render(step.action, state);
    }
    record(state, step.action);
    const bool wait = step.action.is_sys(kWaitForUserInput);
    const bool end = step.action.is_sys(kEndDialogue);
    steps.push_back(std::move(step));
    if (wait) {
      state.phase = Phase::kAwaitUser;
      return steps;
    }
    if (end) {
      state.phase = Phase::kEnded;
      return steps;
    }
  }
  hand_back({});
  return steps;
}

}  // namespace pref_teach
