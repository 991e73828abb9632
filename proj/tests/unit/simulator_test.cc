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

#include <algorithm>
#include <set>

#include "oracles.h"
#include "pref_teach/corpus.h"
#include "pref_teach/error.h"
#include "pref_teach/eval.h"
#include "pref_teach/manager.h"
#include "pref_teach/predictor.h"
#include "pref_teach/preference_kb.h"
#include "pref_teach/simulator.h"

namespace pt = pref_teach;

namespace {

const pt::TransitionMatrix& default_chain() {
  static const auto tm = [] {
    const auto& s = pt::default_schema();
    return pt::estimate_transitions(s.seed_dialogues, pt::MixingRatio{}, s);
  }();
  return tm;
}

std::vector<pt::Dialogue> corpus(int n, std::uint64_t seed, int threads) {
  pt::CorpusConfig cc;
  cc.n_dialogues = n;
  cc.seed = seed;
  cc.threads = threads;
  return pt::generate_corpus(pt::default_schema(), cc, default_chain());
}

}  // namespace

TEST_SUITE("simulator") {

TEST_CASE("transition matrix rows are distributions over APIs and STOP") {
  const auto& tm = default_chain();
  CHECK_NOTHROW(tm.validate());
  CHECK(tm.size() == pt::default_schema().goal_apis().size());
  for (const auto& row : tm.rows) {
    CHECK(row.size() == tm.size() + 1);
    CHECK(row.back() > 0.0);
  }
  CHECK(tm.index_of("nope") == -1);
}

TEST_CASE("mixing only redistributes the non-STOP mass") {
  const auto& s = pt::default_schema();
  const auto counts_only = pt::estimate_transitions(s.seed_dialogues, {1.0, 0.0, 0.0}, s);
  const auto& mixed = default_chain();
  for (std::size_t i = 0; i < mixed.size(); ++i) {
    CHECK(mixed.rows[i].back() == doctest::Approx(counts_only.rows[i].back()).epsilon(1e-12));
  }
}

TEST_CASE("estimation needs seeds") {
  try {
    pt::estimate_transitions({}, {}, pt::default_schema());
    FAIL("expected kEmptySeed");
  } catch (const pt::Error& e) {
    CHECK(e.code() == pt::ErrorCode::kEmptySeed);
  }
}

TEST_CASE("sampled goals are acyclic, argument-complete and type-correct") {
  const auto& s = pt::default_schema();
  pt::Rng rng(123);
  for (int k = 0; k < 2000; ++k) {
    const auto g = pt::sample_goal(default_chain(), s, rng);
    const auto r = pt::testing::goal_well_formed(g, s);
    INFO(r.detail);
    REQUIRE(r.pass);
    REQUIRE_NOTHROW(pt::validate_goal(g, s));
    REQUIRE(static_cast<int>(g.api_sequence().size()) <= 5);
  }
}

TEST_CASE("validate_goal rejects a missing or doubled argument source") {
  const auto& s = pt::default_schema();
  pt::Rng rng(3);
  auto g = pt::sample_goal(default_chain(), s, rng);
  REQUIRE(!g.edges.empty());
  auto missing = g;
  missing.edges.pop_back();
  CHECK_FALSE(pt::testing::goal_well_formed(missing, s).pass);
  CHECK_THROWS_AS(pt::validate_goal(missing, s), pt::Error);
  auto doubled = g;
  doubled.edges.push_back(g.edges.back());
  CHECK_THROWS_AS(pt::validate_goal(doubled, s), pt::Error);
}

TEST_CASE("goal bigrams follow the chain") {
  const auto f = pt::testing::markov_fidelity(default_chain(), pt::default_schema(), 5000, 77);
  INFO("worst cell " << f.worst_cell << " deviates by " << f.max_deviation);
  CHECK(f.max_deviation <= 0.05);
  CHECK(f.transitions > 5000);
}

TEST_CASE("identical seeds give byte-identical corpora regardless of threads") {
  const auto a = corpus(150, 42, 1);
  const auto b = corpus(150, 42, 4);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(pt::serialize_dialogue(a[i]) == pt::serialize_dialogue(b[i]));
  const auto c = corpus(150, 43, 1);
  int same = 0;
  for (std::size_t i = 0; i < a.size(); ++i) same += pt::serialize_dialogue(a[i]) == pt::serialize_dialogue(c[i]);
  CHECK(same < 150);
}

TEST_CASE("simulated dialogues are well annotated") {
  const auto& s = pt::default_schema();
  const auto dialogues = corpus(300, 8, 0);
  CHECK_NOTHROW(pt::check_annotations(dialogues));
  for (const auto& d : dialogues) {
    REQUIRE(!d.turns.empty());
    CHECK(d.turns.back().provider_actions.back().is_sys(pt::kEndDialogue));
    for (std::size_t t = 0; t < d.turns.size(); ++t) {
      const auto& acts = d.turns[t].provider_actions;
      REQUIRE(!acts.empty());
      if (t + 1 < d.turns.size()) CHECK(acts.back().is_sys(pt::kWaitForUserInput));
      for (std::size_t i = 0; i + 1 < acts.size(); ++i) CHECK(acts[i].kind != pt::ActionKind::kSys);
      for (const auto& m : d.turns[t].seeker_entities) {
        CHECK(m.start >= 0);
        CHECK(m.end <= static_cast<int>(d.turns[t].seeker_utterance.tokens.size()));
      }
    }
    CHECK(pt::testing::goal_well_formed(d.goal, s).pass);
  }
  const auto stats = pt::corpus_stats(dialogues);
  CHECK(stats.n_dialogues == 300);
  CHECK(stats.n_turns >= 300);
  CHECK(stats.n_actions > stats.n_turns);
  int api_signatures = 0;
  for (const auto& sig : s.signatures) api_signatures += sig.kind == pt::ActionKind::kApi;
  CHECK(stats.n_apis <= api_signatures);
  CHECK(pt::format_stats_table({{"x", stats}}).find("#dialogues") != std::string::npos);
}

TEST_CASE("gold replay of simulated dialogues matches the interpreter") {
  const auto& s = pt::default_schema();
  for (const auto& d : corpus(200, 19, 0)) {
    pt::PreferenceKb kb;
    pt::DialogueManager manager(s, kb);
    pt::GoldOracle oracle(d);
    INFO(d.id);
    REQUIRE(pt::replay_dialogue(d, oracle, manager, "u"));
    CHECK(pt::testing::kb_state(kb, "u") == pt::testing::interpret_dialogue(d, s));
  }
}

TEST_CASE("out-of-sample split is disjoint") {
  const auto& s = pt::default_schema();
  const auto [train, eval] = pt::split_out_of_sample(s, {});
  std::set<std::string> train_ids, eval_ids;
  for (const auto& t : train.seeker_templates) train_ids.insert(t.id);
  for (const auto& t : eval.seeker_templates) eval_ids.insert(t.id);
  CHECK(!eval_ids.empty());
  for (const auto& id : eval_ids) CHECK(train_ids.count(id) == 0);
  CHECK(train_ids.size() + eval_ids.size() == s.seeker_templates.size());
  for (const auto& et : s.entity_types) {
    if (et.role != pt::EntityRole::kSlot) continue;
    const auto* tc = train.find_catalog(et.name);
    const auto* ec = eval.find_catalog(et.name);
    for (const auto& v : ec->all_values()) CHECK_FALSE(tc->contains(v));
    CHECK(tc->extended_values.empty());
  }
  CHECK(pt::structural_fingerprint(train) == pt::structural_fingerprint(eval));
  CHECK_THROWS_AS(pt::split_out_of_sample(s, {0.0, 0.3, 1}), pt::Error);
}

TEST_CASE("template filling") {
  pt::Template t{"t", "inform_setSportAffinity", "I love the {sport_team}"};
  const auto r = pt::fill_template(t, {{"sport_team", "new york giants"}});
  CHECK(r.tokens == std::vector<std::string>{"i", "love", "the", "new", "york", "giants"});
  REQUIRE(r.mentions.size() == 1);
  CHECK(r.mentions[0] == pt::EntityMention{3, 6, "sport_team", "new york giants"});
  try {
    pt::fill_template(t, {});
    FAIL("expected kUnfilledSlot");
  } catch (const pt::Error& e) {
    CHECK(e.code() == pt::ErrorCode::kUnfilledSlot);
  }
  pt::Rng rng(1);
  try {
    pt::realize_nlg("inform_nothing", {}, pt::default_schema().seeker_templates, rng);
    FAIL("expected kMissingTemplate");
  } catch (const pt::Error& e) {
    CHECK(e.code() == pt::ErrorCode::kMissingTemplate);
  }
}

TEST_CASE("variation settings are validated") {
  pt::VariationConfig v;
  v.error_injection_rate = 1.5;
  CHECK_THROWS_AS(v.validate(), pt::Error);
  v.error_injection_rate = 0.0;
  CHECK_NOTHROW(v.validate());
}

}  // TEST_SUITE
