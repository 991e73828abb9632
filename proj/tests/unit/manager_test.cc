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

#include <doctest.h>

#include <deque>

#include "oracles.h"
#include "pref_teach/context.h"
#include "pref_teach/error.h"
#include "pref_teach/eval.h"
#include "pref_teach/manager.h"
#include "pref_teach/tokenize.h"

namespace pt = pref_teach;

namespace {

// Plays back a fixed list of (action, probability) choices and picks the
// first entity of the requested type.
class Script : public pt::Predictor {
 public:
  std::vector<pt::EntityMention> mentions;
  std::deque<pt::ActionScore> plan;
  pt::ActionScore fallback{"notify_getAllAffinityAction_success", 0.9};

  std::vector<pt::EntityMention> recognize(const std::vector<std::string>&, int) override { return mentions; }
  std::vector<pt::ActionScore> predict_actions(const pt::DialogueContext&, int) override {
    if (plan.empty()) return {fallback};
    auto next = plan.front();
    plan.pop_front();
    return {next};
  }
  int fill_argument(const pt::DialogueContext& ctx, const std::string&, const pt::ArgumentSpec& arg) override {
    for (std::size_t i = 0; i < ctx.entities.size(); ++i) {
      if (ctx.entities[i].mention.entity_type == arg.type) return static_cast<int>(i);
    }
    throw pt::Error(pt::ErrorCode::kNoLegalCandidate, arg.name);
  }
};

std::vector<std::string> names(const std::vector<pt::AgentStep>& steps) {
  std::vector<std::string> out;
  for (const auto& s : steps) out.push_back(s.action.name);
  return out;
}

}  // namespace

TEST_SUITE("manager") {

TEST_CASE("delete-all runs get-all, notify, wait, confirm, delete-all, notify, end") {
  const auto r = pt::testing::delete_all_flow();
  INFO(r.detail);
  CHECK(r.pass);
}

TEST_CASE("a preference taught in one session is read back in the next") {
  const auto r = pt::testing::read_after_write();
  INFO(r.detail);
  CHECK(r.pass);
}

TEST_CASE("phase machine") {
  const auto& s = pt::default_schema();
  pt::PreferenceKb kb;
  pt::DialogueManager m(s, kb);
  auto state = m.open_session("u");
  CHECK(state.phase == pt::Phase::kAwaitUser);
  CHECK(m.open_session("u").session_id != state.session_id);

  Script script;
  script.mentions = {{3, 4, "sport_team", "yankees"}};
  script.plan = {{"setSportAffinity", 0.9}, {"notify_setSportAffinity_success", 0.9}, {"end_dialogue", 0.9}};
  const auto steps = m.handle_utterance(state, "i love the yankees", script);
  CHECK(names(steps) == std::vector<std::string>{"setSportAffinity", "notify_setSportAffinity_success", "end_dialogue"});
  CHECK(state.phase == pt::Phase::kEnded);
  CHECK(steps[0].kb_op == "upsert");
  CHECK(steps[0].kb_applied == 1);
  CHECK(steps[0].action.result_ref == "setSportAffinityResult1");
  CHECK(steps[1].action.args.at("result").result_ref == "setSportAffinityResult1");
  CHECK(steps[1].text.find("yankees") != std::string::npos);
  CHECK(kb.retrieve("u").size() == 1);
  CHECK(state.transcript.turns.size() == 1);
  CHECK(state.transcript.turns[0].provider_actions.size() == 3);

  try {
    m.handle_utterance(state, "more", script);
    FAIL("expected kPrecondition");
  } catch (const pt::Error& e) {
    CHECK(e.code() == pt::ErrorCode::kPrecondition);
  }
  CHECK(pt::phase_name(pt::Phase::kAgentActing) == "agent_acting");
}

TEST_CASE("low confidence hands control back with a clarification") {
  const auto& s = pt::default_schema();
  pt::PreferenceKb kb;
  pt::DialogueManager m(s, kb);
  auto state = m.open_session("u");
  Script script;
  script.plan = {{"setSportAffinity", 0.1}};
  const auto steps = m.handle_utterance(state, "hmm", script);
  CHECK(names(steps) == std::vector<std::string>{"fallback_clarification", "wait_for_user_input"});
  CHECK(!steps[0].text.empty());
  CHECK(state.phase == pt::Phase::kAwaitUser);
  CHECK(kb.retrieve("u").empty());
}

TEST_CASE("an unfillable argument hands control back") {
  const auto& s = pt::default_schema();
  pt::PreferenceKb kb;
  pt::DialogueManager m(s, kb);
  auto state = m.open_session("u");
  Script script;
  script.plan = {{"setSportAffinity", 0.9}};
  CHECK(names(m.handle_utterance(state, "i love it", script)) ==
        std::vector<std::string>{"fallback_clarification", "wait_for_user_input"});
}

TEST_CASE("a destructive call without confirmation never reaches the store") {
  const auto& s = pt::default_schema();
  pt::PreferenceKb kb;
  kb.update("u", {pt::PreferenceDelta::upsert("sports", "sport_team", "yankees")});
  pt::DialogueManager m(s, kb);
  auto state = m.open_session("u");
  Script script;
  script.plan = {{"deleteAllAffinityAction", 0.9}};
  const auto steps = m.handle_utterance(state, "forget everything", script);
  CHECK(names(steps) == std::vector<std::string>{"fallback_clarification", "wait_for_user_input"});
  CHECK(kb.retrieve("u").size() == 1);

  pt::ActionRecord bare;
  bare.kind = pt::ActionKind::kApi;
  bare.name = "deleteAllAffinityAction";
  try {
    m.execute_api(bare, "u");
    FAIL("expected kUnconfirmedDestructiveOp");
  } catch (const pt::Error& e) {
    CHECK(e.code() == pt::ErrorCode::kUnconfirmedDestructiveOp);
  }
  bare.args["confirmAction"] = pt::ArgumentBinding::seeker_entity(0, 0, 1, "yes");
  const auto outcome = m.execute_api(bare, "u");
  CHECK(outcome.applied == 1);
  CHECK(outcome.kb_op == "delete_all");
  CHECK(kb.retrieve("u").empty());
  CHECK(m.execute_api(bare, "u").empty);
}

TEST_CASE("execute_api rejects non-APIs") {
  const auto& s = pt::default_schema();
  pt::PreferenceKb kb;
  pt::DialogueManager m(s, kb);
  for (const char* name : {"launchRocket", "request_cuisine"}) {
    pt::ActionRecord a;
    a.name = name;
    try {
      m.execute_api(a, "u");
      FAIL("expected kUnknownApi");
    } catch (const pt::Error& e) {
      CHECK(e.code() == pt::ErrorCode::kUnknownApi);
    }
  }
}

TEST_CASE("retrieving with nothing stored marks the result empty") {
  const auto& s = pt::default_schema();
  pt::PreferenceKb kb;
  pt::DialogueManager m(s, kb);
  pt::ActionRecord a;
  a.kind = pt::ActionKind::kApi;
  a.name = "getSportAffinity";
  auto out = m.execute_api(a, "u");
  CHECK(out.empty);
  CHECK(out.kb_op == "retrieve");
  kb.update("u", {pt::PreferenceDelta::upsert("sports", "sport_team", "yankees"),
                  pt::PreferenceDelta::upsert("restaurant", "cuisine", "thai")});
  out = m.execute_api(a, "u");
  CHECK_FALSE(out.empty);
  REQUIRE(out.records.size() == 1);
  CHECK(out.records[0].entity_value == "yankees");
}

TEST_CASE("the step budget bounds a runaway turn") {
  const auto& s = pt::default_schema();
  pt::PreferenceKb kb;
  pt::ManagerConfig cfg;
  cfg.max_agent_steps = 5;
  pt::DialogueManager m(s, kb, cfg);
  auto state = m.open_session("u");
  Script script;
  script.fallback = {"request_cuisine", 0.9};
  const auto steps = m.handle_utterance(state, "hello", script);
  REQUIRE(steps.size() == 5);
  CHECK(steps[2].action.name == "request_cuisine");
  CHECK(steps[3].action.name == "fallback_clarification");
  CHECK(steps[4].action.name == "wait_for_user_input");
  CHECK(state.phase == pt::Phase::kAwaitUser);
  CHECK_THROWS_AS(pt::DialogueManager(s, kb, pt::ManagerConfig{0, 0.3, 4}), pt::Error);
  CHECK_THROWS_AS(pt::DialogueManager(s, kb, pt::ManagerConfig{pt::kHandBackSteps, 0.3, 4}), pt::Error);
  for (int budget = pt::kHandBackSteps + 1; budget <= 20; ++budget) {
    pt::DialogueManager bounded(s, kb, pt::ManagerConfig{budget, 0.3, 4});
    auto st = bounded.open_session("u");
    CHECK(static_cast<int>(bounded.handle_utterance(st, "hello", script).size()) == budget);
  }
}

TEST_CASE("gold replay leaves the store in the interpreter's end state") {
  const auto& s = pt::default_schema();
  for (const auto& d : s.seed_dialogues) {
    const auto pre = pt::testing::seed_preconditions(d, s);
    pt::PreferenceKb kb;
    if (!pre.empty()) kb.update("u", pre);
    pt::DialogueManager m(s, kb);
    pt::GoldOracle oracle(d);
    INFO(d.id);
    CHECK(pt::replay_dialogue(d, oracle, m, "u"));
    CHECK(pt::testing::kb_state(kb, "u") == pt::testing::interpret_dialogue(d, s, pre));
  }
}

TEST_CASE("agent steps serialize with their trace") {
  pt::AgentStep step;
  step.action.kind = pt::ActionKind::kApi;
  step.action.name = "setSportAffinity";
  step.action.args["team"] = pt::ArgumentBinding::seeker_entity(0, 3, 4, "yankees");
  step.action.result_ref = "setSportAffinityResult1";
  step.confidence = 0.75;
  step.n_best = {{"setSportAffinity", 0.75}, {"end_dialogue", 0.2}};
  step.kb_op = "upsert";
  step.kb_applied = 1;
  const auto j = step.to_json();
  CHECK(j["kind"] == "api");
  CHECK(j["args"]["team"] == "yankees");
  CHECK(j["result"] == "setSportAffinityResult1");
  CHECK(j["empty_result"] == false);
  CHECK(j["n_best"].size() == 2);
  CHECK(j["kb"]["op"] == "upsert");
}

TEST_CASE("preference summaries") {
  CHECK(pt::describe_preferences({}) == "nothing yet");
  pt::PreferenceRecord r;
  r.domain = "sports";
  r.entity_value = "yankees";
  CHECK(pt::describe_preferences({r}).find("yankees") != std::string::npos);
}

}  // TEST_SUITE
