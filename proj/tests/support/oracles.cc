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

#include "oracles.h"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <limits>
#include <mutex>
#include <thread>

#include <nlohmann/json.hpp>

#include "pref_teach/context.h"
#include "pref_teach/corpus.h"
#include "pref_teach/error.h"
#include "pref_teach/eval.h"
#include "pref_teach/manager.h"
#include "pref_teach/service.h"
#include "pref_teach/tokenize.h"
#include "pref_teach/trainer.h"

// After the project headers: <resolv.h> defines a macro that clashes with Eigen.
#include <httplib.h>

namespace pref_teach::testing {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::string fmt(const char* f, double a, double b = 0.0) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

Check fail(std::string detail) { return {false, std::move(detail)}; }

}  // namespace

// ---- CRF ----------------------------------------------------------------------

double brute_sequence_score(const Mat& emissions, const CrfScores& crf, const std::vector<int>& tags) {
  if (!crf.mask.start_allowed(tags[0])) return kNegInf;
  double s = crf.start(tags[0]) + emissions(0, tags[0]);
  for (std::size_t i = 1; i < tags.size(); ++i) {
    if (!crf.mask.allowed(tags[i - 1], tags[i])) return kNegInf;
    s += crf.transitions(tags[i - 1], tags[i]) + emissions(static_cast<int>(i), tags[i]);
  }
  return s + crf.end(tags.back());
}

BruteCrf brute_crf(const Mat& emissions, const CrfScores& crf) {
  const int len = static_cast<int>(emissions.rows());
  const int n = static_cast<int>(emissions.cols());
  std::vector<std::vector<int>> seqs;
  std::vector<double> scores;
  std::vector<int> tags(len, 0);
  while (true) {
    seqs.push_back(tags);
    scores.push_back(brute_sequence_score(emissions, crf, tags));
    int pos = len - 1;
    while (pos >= 0 && ++tags[pos] == n) tags[pos--] = 0;
    if (pos < 0) break;
  }
  BruteCrf out;
  double mx = kNegInf;
  for (double s : scores) mx = std::max(mx, s);
  double z = 0.0;
  for (double s : scores) z += std::exp(s - mx);
  out.log_z = mx + std::log(z);
  out.marginals = Mat::Zero(len, n);
  out.best_score = kNegInf;
  out.runner_up = kNegInf;
  for (std::size_t k = 0; k < seqs.size(); ++k) {
    const double p = std::exp(scores[k] - out.log_z);
    for (int i = 0; i < len; ++i) out.marginals(i, seqs[k][i]) += p;
    if (scores[k] > out.best_score) {
      out.runner_up = out.best_score;
      out.best_score = scores[k];
      out.best = seqs[k];
    } else if (scores[k] > out.runner_up) {
      out.runner_up = scores[k];
    }
  }
  return out;
}

CrfScores random_crf(int tags, Rng& rng, bool bio) {
  CrfScores c;
  c.transitions = Mat(tags, tags);
  c.start = Vec(tags);
  c.end = Vec(tags);
  for (int i = 0; i < tags; ++i) {
    c.start(i) = 2.0 * rng.normal();
    c.end(i) = 2.0 * rng.normal();
    for (int j = 0; j < tags; ++j) c.transitions(i, j) = 2.0 * rng.normal();
  }
  if (bio) {
    std::vector<std::string> types;
    for (int t = 0; t < (tags - 1) / 2; ++t) types.push_back("t" + std::to_string(t));
    c.mask = TransitionMask::bio(TagSet::bio(types));
  } else {
    c.mask = TransitionMask::all_allowed(tags);
  }
  return c;
}

Mat random_emissions(int len, int tags, Rng& rng) {
  Mat e(len, tags);
  for (int i = 0; i < len; ++i) {
    for (int j = 0; j < tags; ++j) e(i, j) = 3.0 * rng.normal();
  }
  return e;
}

Check crf_oracle_suite(int instances, std::uint64_t seed, double tol) {
  Rng rng(seed);
  for (int k = 0; k < instances; ++k) {
    const bool bio = k % 2 == 1;
    const int tags = bio ? (rng.bernoulli(0.5) ? 3 : 5) : 1 + static_cast<int>(rng.index(5));
    const int len = 1 + static_cast<int>(rng.index(5));
    const CrfScores crf = random_crf(tags, rng, bio);
    const Mat em = random_emissions(len, tags, rng);
    const BruteCrf ref = brute_crf(em, crf);

    const double log_z = crf_log_partition(em, crf);
    if (std::abs(log_z - ref.log_z) > tol) {
      return fail("instance " + std::to_string(k) + fmt(": log Z %.9f vs %.9f", log_z, ref.log_z));
    }
    const Mat marg = crf_marginals(em, crf);
    const double dm = (marg - ref.marginals).cwiseAbs().maxCoeff();
    if (dm > tol) return fail("instance " + std::to_string(k) + fmt(": marginal error %.3g", dm));
    double best = 0.0;
    const auto path = crf_viterbi(em, crf, &best);
    if (std::abs(best - ref.best_score) > tol) {
      return fail("instance " + std::to_string(k) + fmt(": viterbi score %.9f vs %.9f", best, ref.best_score));
    }
    if (std::abs(brute_sequence_score(em, crf, path) - ref.best_score) > tol) {
      return fail("instance " + std::to_string(k) + ": viterbi path does not attain the best score");
    }
    if (ref.best_score - ref.runner_up > tol && path != ref.best) {
      return fail("instance " + std::to_string(k) + ": viterbi path differs from the unique argmax");
    }
  }
  return {true, std::to_string(instances) + " instances"};
}

// ---- catalog ------------------------------------------------------------------

Check catalog_golden() {
  const auto tokens = tokenize("I follow San Francisco Giant");
  const std::vector<std::string> want_tokens = {"i", "follow", "san", "francisco", "giant"};
  if (tokens != want_tokens) return fail("tokenization: " + join_tokens(tokens));
  std::vector<Catalog> catalogs(2);
  catalogs[0].entity_type = "sport_team";
  catalogs[0].values = {"san francisco giant"};
  catalogs[1].entity_type = "city";
  catalogs[1].values = {"san francisco"};
  const auto f = catalog_features(tokens, catalogs, 3);
  const std::vector<std::vector<std::vector<int>>> want = {
      {{0, 0}, {0, 0}, {0, 0}, {0, 0}, {0, 0}},
      {{0, 0}, {0, 0}, {0, 1}, {0, 0}, {0, 0}},
      {{0, 0}, {0, 0}, {1, 0}, {0, 0}, {0, 0}},
  };
  for (int n = 1; n <= 3; ++n) {
    if (f.plane(n) != want[n - 1]) {
      std::string got;
      for (const auto& row : f.plane(n)) got += "[" + std::to_string(row[0]) + "," + std::to_string(row[1]) + "]";
      return fail(std::to_string(n) + "-gram plane " + got);
    }
  }
  return {true, "three planes match"};
}

// ---- gradients --------------------------------------------------------------------

ModelBundle tiny_bundle(const DomainSchema& schema, const std::vector<Dialogue>& corpus, std::uint64_t seed) {
  ModelConfig cfg;
  cfg.d = 8;
  cfg.ap_hidden = 10;
  cfg.af_hidden = 6;
  cfg.init_scale = 0.5;
  return ModelBundle::initialize(schema, corpus, cfg, seed);
}

GradCheck gradient_check(ModelBundle& bundle, const Dialogue& dialogue, const DomainSchema& schema, int per_param,
                         std::uint64_t seed, double tol, double h) {
  GradCheck out;
  Rng rng(seed);
  bundle.params().zero_grad();
  bundle.dialogue_loss(dialogue, schema, true);
  for (Param& p : bundle.params().all()) {
    const Mat analytic = p.grad;
    std::vector<Eigen::Index> strong, any;
    for (Eigen::Index i = 0; i < analytic.size(); ++i) {
      any.push_back(i);
      if (std::abs(analytic(i)) >= 1e-6) strong.push_back(i);
    }
    std::vector<Eigen::Index>& pool = strong.empty() ? any : strong;
    rng.shuffle(pool);
    const std::string group = p.name.substr(0, p.name.find('.'));
    for (int k = 0; k < per_param && k < static_cast<int>(pool.size()); ++k) {
      const Eigen::Index i = pool[k];
      const double orig = p.value(i);
      p.value(i) = orig + h;
      const double up = bundle.dialogue_loss(dialogue, schema, false).total();
      p.value(i) = orig - h;
      const double down = bundle.dialogue_loss(dialogue, schema, false).total();
      p.value(i) = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic(i);
      const double scale = std::max(std::abs(a), std::abs(numeric));
      const double rel = scale < 1e-9 ? 0.0 : std::abs(a - numeric) / scale;
      ++out.checked;
      ++out.per_group[group];
      out.max_rel = std::max(out.max_rel, rel);
      if (rel > tol) {
        ++out.failed;
        char buf[160];
        std::snprintf(buf, sizeof buf, "%s[%ld]: analytic %.8g numeric %.8g", p.name.c_str(), static_cast<long>(i), a,
                      numeric);
        out.failures.push_back(buf);
      }
    }
  }
  return out;
}

// ---- goals ----------------------------------------------------------------------

Check goal_well_formed(const EntityTransferGraph& goal, const DomainSchema& schema) {
  const int n = static_cast<int>(goal.vertices.size());
  std::vector<int> indeg(n, 0);
  std::vector<std::vector<int>> out(n);
  for (const auto& e : goal.edges) {
    if (e.from < 0 || e.from >= n || e.to < 0 || e.to >= n) return fail("edge out of range");
    out[e.from].push_back(e.to);
    ++indeg[e.to];
  }
  std::vector<int> queue;
  for (int v = 0; v < n; ++v) {
    if (indeg[v] == 0) queue.push_back(v);
  }
  std::size_t seen = 0;
  while (seen < queue.size()) {
    for (int w : out[queue[seen++]]) {
      if (--indeg[w] == 0) queue.push_back(w);
    }
  }
  if (static_cast<int>(seen) != n) return fail("cycle");

  for (int v = 0; v < n; ++v) {
    const auto& gv = goal.vertices[v];
    if (gv.kind != GoalVertex::Kind::kApiCall) continue;
    const ActionSignature* sig = schema.find_signature(gv.api);
    if (sig == nullptr) return fail("unknown api " + gv.api);
    for (const auto& e : goal.edges) {
      if (e.to == v && sig->find_argument(e.argument) == nullptr) return fail("edge into unknown argument");
    }
    for (const auto& arg : sig->arguments) {
      if (!arg.required) continue;
      int count = 0;
      for (const auto& e : goal.edges) {
        if (e.to != v || e.argument != arg.name) continue;
        ++count;
        const auto& src = goal.vertices[e.from];
        if (src.kind == GoalVertex::Kind::kSeekerEntity) {
          if (src.entity_type != arg.type) return fail(gv.api + "." + arg.name + " fed by " + src.entity_type);
        } else {
          const ActionSignature* ps = schema.find_signature(src.api);
          if (ps == nullptr || !ps->produces || *ps->produces != arg.type) {
            return fail(gv.api + "." + arg.name + " fed by " + src.api);
          }
        }
      }
      if (count != 1) return fail(gv.api + "." + arg.name + " has " + std::to_string(count) + " sources");
    }
  }
  return {};
}

MarkovFidelity markov_fidelity(const TransitionMatrix& tm, const DomainSchema& schema, int n_goals,
                               std::uint64_t seed, const GoalSamplerConfig& config) {
  const std::size_t n = tm.size();
  std::vector<long> start(n, 0);
  std::vector<std::vector<long>> counts(n, std::vector<long>(n + 1, 0));
  Rng rng(seed);
  for (int g = 0; g < n_goals; ++g) {
    const auto seq = sample_goal(tm, schema, rng, config).api_sequence();
    ++start[tm.index_of(seq[0])];
    // The step out of position k is only drawn from the chain while the
    // length cap still allows another API.
    for (std::size_t k = 0; k < seq.size() && static_cast<int>(k) + 1 < config.max_apis; ++k) {
      const std::size_t next = k + 1 < seq.size() ? static_cast<std::size_t>(tm.index_of(seq[k + 1])) : tm.stop_index();
      ++counts[tm.index_of(seq[k])][next];
    }
  }
  MarkovFidelity out;
  auto name = [&](std::size_t j) { return j == tm.stop_index() ? std::string("STOP") : tm.apis[j]; };
  for (std::size_t j = 0; j < n; ++j) {
    const double dev = std::abs(static_cast<double>(start[j]) / n_goals - tm.start[j]);
    if (dev > out.max_deviation) {
      out.max_deviation = dev;
      out.worst_cell = "start -> " + name(j);
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    long total = 0;
    for (long c : counts[i]) total += c;
    out.transitions += total;
    if (total == 0) continue;
    for (std::size_t j = 0; j <= n; ++j) {
      const double dev = std::abs(static_cast<double>(counts[i][j]) / total - tm.rows[i][j]);
      if (dev > out.max_deviation) {
        out.max_deviation = dev;
        out.worst_cell = name(i) + " -> " + name(j) + " (" + std::to_string(total) + " draws)";
      }
    }
  }
  return out;
}

// ---- preference store ---------------------------------------------------------

namespace {

using StateKey = std::tuple<std::string, std::string, std::string, std::string>;
using State = std::map<StateKey, std::string>;

std::optional<std::string> bound_value(const ActionRecord& a, const std::string& arg) {
  auto it = a.args.find(arg);
  if (it == a.args.end()) return std::nullopt;
  if (it->second.source == BindingSource::kSeekerEntity) return it->second.value;
  if (it->second.source == BindingSource::kConstant) return it->second.literal;
  return std::nullopt;
}

void apply_delta(State& state, const PreferenceDelta& d) {
  const PreferenceRecord& r = d.record;
  switch (d.op) {
    case DeltaOp::kUpsert:
      state[{r.domain, r.entity_type, r.entity_value, r.condition.value_or("")}] =
          std::string(polarity_name(r.polarity));
      break;
    case DeltaOp::kDelete:
      std::erase_if(state, [&](const auto& kv) {
        return std::get<0>(kv.first) == r.domain && std::get<1>(kv.first) == r.entity_type &&
               std::get<2>(kv.first) == r.entity_value;
      });
      break;
    case DeltaOp::kDeleteAll:
      state.clear();
      break;
  }
}

// The write a gold call performs, read straight off its store mapping.
std::optional<PreferenceDelta> gold_write(const ActionRecord& a, const KbMapping& m) {
  switch (m.op) {
    case KbOp::kUpsert: {
      std::optional<std::string> cond;
      if (!m.condition_argument.empty()) cond = bound_value(a, m.condition_argument);
      return PreferenceDelta::upsert(m.domain, m.entity_type, *bound_value(a, m.value_argument), m.polarity,
                                     cond);
    }
    case KbOp::kDelete:
      return PreferenceDelta::remove(m.domain, m.entity_type, *bound_value(a, m.value_argument));
    case KbOp::kDeleteAll:
      return PreferenceDelta::delete_all();
    default:
      return std::nullopt;
  }
}

bool matches(const StateKey& k, const KbMapping& m) {
  return (m.domain.empty() || std::get<0>(k) == m.domain) &&
         (m.entity_type.empty() || std::get<1>(k) == m.entity_type);
}

}  // namespace

std::set<KbTuple> interpret_dialogue(const Dialogue& dialogue, const DomainSchema& schema,
                                     const std::vector<PreferenceDelta>& initial) {
  State state;
  for (const auto& d : initial) apply_delta(state, d);
  for (const auto& turn : dialogue.turns) {
    for (const auto& a : turn.provider_actions) {
      if (a.kind != ActionKind::kApi) continue;
      const ActionSignature* sig = schema.find_signature(a.name);
      if (auto w = gold_write(a, sig->kb)) apply_delta(state, *w);
    }
  }
  std::set<KbTuple> out;
  for (const auto& [k, pol] : state) {
    out.insert({std::get<0>(k), std::get<1>(k), std::get<2>(k), std::get<3>(k), pol});
  }
  return out;
}

std::vector<PreferenceDelta> seed_preconditions(const Dialogue& dialogue, const DomainSchema& schema) {
  std::vector<PreferenceDelta> pre;
  State state;
  auto need = [&](PreferenceDelta d) {
    apply_delta(state, d);
    pre.push_back(std::move(d));
  };
  for (const auto& turn : dialogue.turns) {
    for (const auto& a : turn.provider_actions) {
      if (a.kind != ActionKind::kApi) continue;
      const ActionSignature* sig = schema.find_signature(a.name);
      const KbMapping& m = sig->kb;
      if (!a.empty_result) {
        if (m.op == KbOp::kDelete) {
          const std::string v = *bound_value(a, m.value_argument);
          const bool held = std::any_of(state.begin(), state.end(), [&](const auto& kv) {
            return matches(kv.first, m) && std::get<2>(kv.first) == v;
          });
          if (!held) need(PreferenceDelta::upsert(m.domain, m.entity_type, v));
        } else if (m.op == KbOp::kRetrieve || m.op == KbOp::kDeleteAll) {
          const bool held = std::any_of(state.begin(), state.end(),
                                        [&](const auto& kv) { return matches(kv.first, m); });
          if (!held) {
            // Any value an upsert in the queried slice could have written.
            for (const auto& other : schema.signatures) {
              const KbMapping& w = other.kb;
              if (w.op != KbOp::kUpsert || !matches({w.domain, w.entity_type, "", ""}, m)) continue;
              need(PreferenceDelta::upsert(w.domain, w.entity_type,
                                           schema.find_catalog(w.entity_type)->values.front()));
              break;
            }
          }
        }
      }
      if (auto w = gold_write(a, m)) apply_delta(state, *w);
    }
  }
  return pre;
}

std::set<KbTuple> kb_state(const PreferenceKb& kb, const std::string& user_id) {
  std::set<KbTuple> out;
  for (const auto& r : kb.retrieve(user_id)) {
    out.insert({r.domain, r.entity_type, r.entity_value, r.condition.value_or(""),
                std::string(polarity_name(r.polarity))});
  }
  return out;
}

// ---- evaluation fixture -------------------------------------------------------

Dialogue markup(const DomainSchema& schema, const std::string& json_text) {
  return parse_markup_dialogue(nlohmann::json::parse(json_text), schema);
}

Dialogue two_turn_fixture(const DomainSchema& schema) {
  return markup(schema, R"json({"id": "fixture-2turn", "turns": [
    {"user": "I love the [Yankees|sport_team]", "nlg": ["inform_setSportAffinity"],
     "actions": ["setSportAffinity(team=yankees) -> setSportAffinityResult1",
                 "notify_setSportAffinity_success(result=$setSportAffinityResult1)",
                 "wait_for_user_input()"]},
    {"user": "I also like [thai|cuisine] food", "nlg": ["inform_setDietOrCuisineAffinity"],
     "actions": ["setDietOrCuisineAffinity(cuisine=thai) -> setDietOrCuisineAffinityResult1",
                 "end_dialogue()"]}]})json");
}

std::vector<EntityMention> FixturePredictor::recognize(const std::vector<std::string>& tokens, int turn) {
  if (turn == 0) return {};
  return GoldOracle::recognize(tokens, turn);
}

std::vector<ActionScore> FixturePredictor::predict_actions(const DialogueContext& ctx, int n_best) {
  auto ranked = GoldOracle::predict_actions(ctx, n_best);
  if (!ranked.empty() && ranked.front().name == kEndDialogue) return {{std::string(kWaitForUserInput), 1.0}};
  return ranked;
}

int FixturePredictor::fill_argument(const DialogueContext& ctx, const std::string& action, const ArgumentSpec& arg) {
  if (arg.type == "cuisine") {
    for (std::size_t i = 0; i < ctx.entities.size(); ++i) {
      if (ctx.entities[i].mention.entity_type == "sport_team") return static_cast<int>(i);
    }
  }
  return GoldOracle::fill_argument(ctx, action, arg);
}

Check metric_fixture() {
  const DomainSchema& schema = default_schema();
  const std::vector<Dialogue> corpus = {two_turn_fixture(schema)};
  EvalOptions opts;
  opts.threads = 1;
  const auto report = evaluate(
      corpus, [](const Dialogue& d) { return std::make_unique<FixturePredictor>(d); }, schema, opts);
  // (correct turns, correct actions) out of 2 turns and 5 actions.
  const std::vector<std::tuple<std::string, long, long>> want = {
      {"NER", 1, 2}, {"AP", 1, 4}, {"AF", 1, 4}, {"AP+AF", 1, 3}, {"NER+AP+AF", 0, 0}};
  if (report.rows.size() != want.size()) return fail("row count");
  for (std::size_t r = 0; r < want.size(); ++r) {
    const auto& [name, turns, actions] = want[r];
    const auto& [got_name, acc] = report.rows[r];
    if (got_name != name) return fail("row " + std::to_string(r) + " is " + got_name);
    if (acc.turns != 2 || acc.actions != 5 || acc.correct_turns != turns || acc.correct_actions != actions) {
      return fail(name + ": " + std::to_string(acc.correct_turns) + "/" + std::to_string(acc.turns) + " turns, " +
                  std::to_string(acc.correct_actions) + "/" + std::to_string(acc.actions) + " actions");
    }
  }
  return {true, "20 cells match"};
}

// ---- manager ------------------------------------------------------------------

Dialogue seed_dialogue(const DomainSchema& schema, const std::string& id) {
  for (const auto& d : schema.seed_dialogues) {
    if (d.id == id) return d;
  }
  throw Error(ErrorCode::kInvalidArgument, "no seed " + id);
}

Check delete_all_flow() {
  const DomainSchema& schema = default_schema();
  const Dialogue d = seed_dialogue(schema, "seed-09");
  PreferenceKb kb;
  kb.update("ann", {PreferenceDelta::upsert("sports", "sport_team", "yankees"),
                    PreferenceDelta::upsert("restaurant", "cuisine", "thai")});
  DialogueManager manager(schema, kb);
  GoldOracle oracle(d);
  SessionState s = manager.open_session("ann");
  std::vector<std::string> order;
  for (std::size_t t = 0; t < d.turns.size(); ++t) {
    for (const auto& step : manager.handle_utterance(s, d.turns[t].seeker_utterance.text, oracle)) {
      order.push_back(step.action.name);
    }
    if (t == 0 && s.phase != Phase::kAwaitUser) return fail("not waiting for the confirmation");
    if (t == 0 && kb.retrieve("ann").size() != 2) return fail("records deleted before confirmation");
  }
  const std::vector<std::string> want = {"getAllAffinityAction",
                                         "notify_getAllAffinityAction_success",
                                         "wait_for_user_input",
                                         "deleteAllAffinityAction",
                                         "notify_deleteAllAffinityAction_success",
                                         "end_dialogue"};
  if (order != want) {
    std::string got;
    for (const auto& n : order) got += n + " ";
    return fail("order: " + got);
  }
  if (s.phase != Phase::kEnded) return fail("session did not end");
  if (!kb.retrieve("ann").empty()) return fail("records survived delete-all");
  return {true, "get-all, notify, wait, confirm, delete-all, notify, end"};
}

Check read_after_write() {
  const DomainSchema& schema = default_schema();
  const auto dir = std::filesystem::temp_directory_path() / ("pref-teach-raw-" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  const auto path = dir / "kb.json";
  const Dialogue teach = seed_dialogue(schema, "seed-01");
  const Dialogue reuse = markup(schema, R"json({"id": "reuse", "turns": [
    {"user": "what's my sports update?", "nlg": ["inform_getSportAffinity"],
     "actions": ["getSportAffinity() -> getSportAffinityResult1",
                 "notify_getSportAffinity_success(result=$getSportAffinityResult1)",
                 "end_dialogue()"]}]})json");
  Check result{true, "teaching session stored yankees; a later session retrieved it"};
  {
    PreferenceKb kb(path);
    DialogueManager manager(schema, kb);
    GoldOracle oracle(teach);
    SessionState s = manager.open_session("ben");
    manager.handle_utterance(s, teach.turns[0].seeker_utterance.text, oracle);
    if (s.phase != Phase::kEnded) result = fail("teaching session did not end");
  }
  if (result.pass) {
    PreferenceKb kb(path);
    DialogueManager manager(schema, kb);
    GoldOracle oracle(reuse);
    SessionState s = manager.open_session("ben");
    const auto steps = manager.handle_utterance(s, reuse.turns[0].seeker_utterance.text, oracle);
    bool found = false;
    for (const auto& [handle, outcome] : s.results) {
      for (const auto& r : outcome.records) found = found || r.entity_value == "yankees";
    }
    std::string text;
    for (const auto& st : steps) text += st.text;
    if (!found) result = fail("retrieve did not return the stored team");
    else if (text.find("yankees") == std::string::npos) result = fail("notify text lacks the team: " + text);
  }
  std::filesystem::remove_all(dir);
  return result;
}

// ---- service ------------------------------------------------------------------

const ModelBundle& small_trained_bundle() {
  static const ModelBundle bundle = [] {
    const DomainSchema& schema = default_schema();
    CorpusConfig cc;
    cc.n_dialogues = 400;
    cc.seed = 11;
    const auto tm = estimate_transitions(schema.seed_dialogues, cc.variation.mixing, schema);
    const auto corpus = generate_corpus(schema, cc, tm);
    TrainConfig tc;
    tc.epochs = 12;
    tc.seed = 3;
    return train(corpus, schema, tc).bundle;
  }();
  return bundle;
}

namespace {

struct Expect {
  std::string what;
  int status;
};

bool has_string(const nlohmann::json& j, const char* key) { return j.contains(key) && j[key].is_string(); }

// Shape of one AgentStep as published by the service.
bool valid_step(const nlohmann::json& s) {
  if (!s.is_object() || !has_string(s, "kind") || !has_string(s, "name") || !has_string(s, "text")) return false;
  if (!s.contains("args") || !s["args"].is_object()) return false;
  if (!s.contains("confidence") || !s["confidence"].is_number()) return false;
  if (!s.contains("n_best") || !s["n_best"].is_array()) return false;
  for (const auto& nb : s["n_best"]) {
    if (!has_string(nb, "name") || !nb.contains("probability") || !nb["probability"].is_number()) return false;
  }
  if (s["kind"] == "api" && (!s.contains("empty_result") || !s["empty_result"].is_boolean())) return false;
  if (s["kind"] == "nlg" && s["text"].get<std::string>().empty()) return false;
  return true;
}

bool valid_record(const nlohmann::json& r) {
  return r.is_object() && has_string(r, "user_id") && has_string(r, "domain") && has_string(r, "entity_type") &&
         has_string(r, "entity_value") && has_string(r, "polarity") && r.contains("updated_at") &&
         r["updated_at"].is_number_unsigned() && r.contains("condition") &&
         (r["condition"].is_null() || r["condition"].is_string());
}

}  // namespace

Check service_contract(const ModelBundle& bundle) {
  const DomainSchema& schema = default_schema();
  PreferenceKb kb;
  ServiceConfig cfg;
  cfg.port = 0;
  cfg.max_sessions = 4;
  Service service(schema, bundle, kb, cfg);

  std::mutex mu;
  std::condition_variable cv;
  std::string hold_session;
  bool entered = false;
  bool released = false;
  service.set_turn_hook([&](const std::string& id) {
    std::unique_lock lock(mu);
    if (id != hold_session) return;
    entered = true;
    cv.notify_all();
    cv.wait(lock, [&] { return released; });
  });

  const int port = service.bind();
  if (port <= 0) return fail("bind failed");
  std::thread server([&] { service.listen_after_bind(); });
  service.wait_until_ready();
  httplib::Client cli("127.0.0.1", port);
  cli.set_read_timeout(60, 0);

  Check result{true, ""};
  int checks = 0;
  auto expect = [&](const httplib::Result& res, int status, const std::string& what) -> nlohmann::json {
    ++checks;
    if (!result.pass) return {};
    if (!res) {
      result = fail(what + ": no response");
      return {};
    }
    if (res->status != status) {
      result = fail(what + ": status " + std::to_string(res->status) + " (want " + std::to_string(status) + ") " +
                    res->body);
      return {};
    }
    if (res->get_header_value("Access-Control-Allow-Origin") != "*") {
      result = fail(what + ": missing CORS header");
      return {};
    }
    auto j = nlohmann::json::parse(res->body, nullptr, false);
    if (status >= 400 && !(j.is_object() && has_string(j, "error"))) result = fail(what + ": error body " + res->body);
    return j;
  };
  auto require = [&](bool ok, const std::string& what) {
    ++checks;
    if (result.pass && !ok) result = fail(what);
  };
  const std::string json = "application/json";

  auto health = expect(cli.Get("/api/health"), 200, "health");
  require(health.is_object() && health.value("status", "") == "ok" && has_string(health, "schema") &&
              has_string(health, "fingerprint") && health["fingerprint"].get<std::string>().size() == 16 &&
              health.contains("sessions") && health["sessions"].is_number_integer(),
          "health body");
  {
    auto res = cli.Options("/api/session");
    ++checks;
    if (result.pass && (!res || res->status != 204)) result = fail("OPTIONS preflight");
  }

  expect(cli.Post("/api/session", "not json", json), 400, "session: malformed body");
  expect(cli.Post("/api/session", "[]", json), 400, "session: array body");
  expect(cli.Post("/api/session", "{}", json), 400, "session: missing user_id");
  expect(cli.Post("/api/session", R"({"user_id": ""})", json), 400, "session: empty user_id");
  expect(cli.Post("/api/session", R"({"user_id": 7})", json), 400, "session: numeric user_id");
  auto open = [&](const std::string& user) {
    auto j = expect(cli.Post("/api/session", nlohmann::json{{"user_id", user}}.dump(), json), 200, "open session");
    require(j.is_object() && has_string(j, "session_id") && j.value("user_id", "") == user &&
                j.value("phase", "") == "await_user",
            "session body");
    return j.value("session_id", "");
  };
  const std::string a = open("carol");
  const std::string b = open("dave");

  const std::string ua = "/api/session/" + a + "/utterance";
  expect(cli.Post("/api/session/nope/utterance", R"({"text": "hi"})", json), 404, "utterance: unknown session");
  expect(cli.Post(ua, "{", json), 400, "utterance: malformed body");
  expect(cli.Post(ua, "{}", json), 400, "utterance: missing text");
  expect(cli.Post(ua, R"({"text": 3})", json), 400, "utterance: non-string text");

  auto turn = expect(cli.Post(ua, R"({"text": "I love the yankees"})", json), 200, "utterance");
  require(turn.is_object() && turn.contains("agent_steps") && turn["agent_steps"].is_array() &&
              !turn["agent_steps"].empty() && has_string(turn, "phase"),
          "utterance body");
  if (result.pass) {
    for (const auto& s : turn["agent_steps"]) require(valid_step(s), "agent step shape: " + s.dump());
    require(turn["phase"] == "ended", "teaching turn did not end the dialogue: " + turn.dump());
  }
  expect(cli.Post(ua, R"({"text": "and the knicks"})", json), 409, "utterance: ended session");

  expect(cli.Get("/api/session/nope"), 404, "session state: unknown");
  auto state = expect(cli.Get("/api/session/" + a), 200, "session state");
  require(state.is_object() && state.value("session_id", "") == a && state.value("phase", "") == "ended" &&
              state.contains("transcript") && state["transcript"].contains("turns") &&
              state["transcript"]["turns"].size() == 1,
          "session state body");

  auto prefs = expect(cli.Get("/api/preferences/carol"), 200, "preferences");
  require(prefs.is_array() && prefs.size() == 1, "preferences after teaching: " + prefs.dump());
  if (result.pass) {
    require(valid_record(prefs[0]) && prefs[0]["entity_value"] == "yankees", "record: " + prefs[0].dump());
  }
  auto none = expect(cli.Get("/api/preferences/nobody"), 200, "preferences: unknown user");
  require(none.is_array() && none.empty(), "unknown user has records");

  const std::string reset = "/api/preferences/carol/reset";
  expect(cli.Post(reset, "nope", json), 400, "reset: malformed body");
  expect(cli.Post(reset, "{}", json), 400, "reset: missing confirm");
  expect(cli.Post(reset, R"({"confirm": "yes"})", json), 400, "reset: non-boolean confirm");
  auto kept = expect(cli.Post(reset, R"({"confirm": false})", json), 200, "reset: declined");
  require(kept == nlohmann::json{{"deleted", 0}, {"confirmed", false}}, "declined reset body: " + kept.dump());
  require(kb.retrieve("carol").size() == 1, "declined reset deleted records");
  auto gone = expect(cli.Post(reset, R"({"confirm": true})", json), 200, "reset: confirmed");
  require(gone == nlohmann::json{{"deleted", 1}, {"confirmed", true}}, "confirmed reset body: " + gone.dump());
  require(kb.retrieve("carol").empty(), "confirmed reset kept records");

  // Two concurrent POSTs to one session: the second is refused while the
  // first holds it.
  if (result.pass) {
    {
      std::lock_guard lock(mu);
      hold_session = b;
    }
    const std::string ub = "/api/session/" + b + "/utterance";
    httplib::Result first;
    std::thread t([&] {
      httplib::Client c2("127.0.0.1", port);
      c2.set_read_timeout(60, 0);
      first = c2.Post(ub, R"({"text": "I love thai food"})", json);
    });
    {
      std::unique_lock lock(mu);
      cv.wait(lock, [&] { return entered; });
    }
    auto busy = cli.Post(ub, R"({"text": "I love the knicks"})", json);
    {
      std::lock_guard lock(mu);
      released = true;
      hold_session.clear();
    }
    cv.notify_all();
    t.join();
    expect(busy, 409, "concurrent POST");
    expect(first, 200, "held POST");
    auto sb = expect(cli.Get("/api/session/" + b), 200, "session state after race");
    require(sb.contains("transcript") && sb["transcript"]["turns"].size() == 1, "race interleaved turns");
  }

  open("erin");
  open("frank");
  expect(cli.Post("/api/session", R"({"user_id": "gina"})", json), 503, "session limit");
  auto res404 = cli.Get("/api/nothing");
  ++checks;
  if (result.pass && (!res404 || res404->status != 404)) result = fail("unknown route");

  service.stop();
  server.join();
  if (result.pass) result.detail = std::to_string(checks) + " checks";
  return result;
}

}  // namespace pref_teach::testing
