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

#include "pref_teach/eval.h"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <mutex>
#include <thread>
#include <tuple>
#include <unordered_set>

#include "pref_teach/context.h"
#include "pref_teach/error.h"
#include "pref_teach/tokenize.h"

namespace pref_teach {
namespace {

enum Row { kNer = 0, kAp, kAf, kApAf, kAll, kRowCount };
using Tally = std::array<Accuracy, kRowCount>;

bool same_span(const EntityMention& a, const EntityMention& b) {
  return a.start == b.start && a.end == b.end && a.entity_type == b.entity_type;
}

bool same_mentions(std::vector<EntityMention> a, std::vector<EntityMention> b) {
  if (a.size() != b.size()) return false;
  auto key = [](const EntityMention& x, const EntityMention& y) {
    return std::tie(x.start, x.end, x.entity_type) < std::tie(y.start, y.end, y.entity_type);
  };
  std::sort(a.begin(), a.end(), key);
  std::sort(b.begin(), b.end(), key);
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!same_span(a[i], b[i])) return false;
  }
  return true;
}

bool arguments_correct(const ActionRecord& gold, const DialogueContext& ctx, Predictor& predictor,
                       const DomainSchema& schema) {
  const ActionSignature* sig = schema.find_signature(gold.name);
  for (const auto& [name, binding] : gold.args) {
    if (binding.source == BindingSource::kConstant) continue;
    const ArgumentSpec* spec = sig != nullptr ? sig->find_argument(name) : nullptr;
    if (spec == nullptr) return false;
    if (binding.source == BindingSource::kApiResult) {
      const auto ref = latest_result(ctx, spec->type, schema);
      if (!ref || *ref != binding.result_ref) return false;
      continue;
    }
    try {
      const int idx = predictor.fill_argument(ctx, gold.name, *spec);
      const ContextEntity& e = ctx.entities.at(static_cast<std::size_t>(idx));
      if (e.turn != binding.turn || e.mention.start != binding.start || e.mention.end != binding.end) return false;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kNoLegalCandidate) throw;
      return false;
    }
  }
  return true;
}

void tally_dialogue(const Dialogue& d, Predictor& predictor, const DomainSchema& schema, Tally& out) {
  ContextStore store;
  for (std::size_t t = 0; t < d.turns.size(); ++t) {
    const Turn& turn = d.turns[t];
    const auto& tokens = turn.seeker_utterance.tokens;
    const bool ner_ok = same_mentions(predictor.recognize(tokens, static_cast<int>(t)), turn.seeker_entities);
    store.begin_turn(tokens, turn.seeker_entities);
    std::array<bool, kRowCount> turn_ok;
    turn_ok.fill(true);
    turn_ok[kNer] = ner_ok;
    turn_ok[kAll] = ner_ok;
    for (const ActionRecord& gold : turn.provider_actions) {
      const DialogueContext& ctx = store.context();
      const auto ranked = predictor.predict_actions(ctx, 1);
      const bool ap_ok = !ranked.empty() && ranked.front().name == gold.name;
      const bool af_ok = arguments_correct(gold, ctx, predictor, schema);
      const std::array<bool, kRowCount> ok = {ner_ok, ap_ok, af_ok, ap_ok && af_ok, ner_ok && ap_ok && af_ok};
      for (int r = 0; r < kRowCount; ++r) {
        out[r].actions += 1;
        out[r].correct_actions += ok[r] ? 1 : 0;
        turn_ok[r] = turn_ok[r] && ok[r];
      }
      store.record(gold);
    }
    for (int r = 0; r < kRowCount; ++r) {
      out[r].turns += 1;
      out[r].correct_turns += turn_ok[r] ? 1 : 0;
    }
  }
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string pct(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f%%", 100.0 * x);
  return buf;
}

}  // namespace

Accuracy& Accuracy::operator+=(const Accuracy& o) {
  correct_turns += o.correct_turns;
  turns += o.turns;
  correct_actions += o.correct_actions;
  actions += o.actions;
  return *this;
}

const Accuracy& EvalReport::row(std::string_view name) const {
  for (const auto& [n, acc] : rows) {
    if (n == name) return acc;
  }
  throw Error(ErrorCode::kInvalidArgument, "no report row '" + std::string(name) + "'");
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json r = nlohmann::json::object();
  for (const auto& [name, a] : rows) {
    r[name] = {{"accuracy_per_turn", a.per_turn()},
               {"accuracy_per_action", a.per_action()},
               {"correct_turns", a.correct_turns},
               {"turns", a.turns},
               {"correct_actions", a.correct_actions},
               {"actions", a.actions}};
  }
  nlohmann::json j = {{"rows", r},
                      {"stats",
                       {{"n_apis", stats.n_apis},
                        {"n_dialogues", stats.n_dialogues},
                        {"n_actions", stats.n_actions},
                        {"n_turns", stats.n_turns}}},
                      {"config_fingerprint", config_fingerprint}};
  j["success_rate"] = success_rate ? nlohmann::json(*success_rate) : nlohmann::json(nullptr);
  return j;
}

std::string EvalReport::format_table(std::string_view title) const {
  std::string out;
  char buf[160];
  if (!title.empty()) out += std::string(title) + "\n";
  std::snprintf(buf, sizeof buf, "%-12s %14s %16s\n", "model", "ACC per-turn", "ACC per-action");
  out += buf;
  for (const auto& [name, a] : rows) {
    std::snprintf(buf, sizeof buf, "%-12s %14s %16s\n", name.c_str(), pct(a.per_turn()).c_str(),
                  pct(a.per_action()).c_str());
    out += buf;
  }
  if (success_rate) out += "free-running success: " + pct(*success_rate) + "\n";
  return out;
}

void check_annotations(const std::vector<Dialogue>& corpus) {
  std::vector<std::string> bad;
  for (const auto& d : corpus) {
    bool ok = true;
    for (const auto& turn : d.turns) {
      for (const auto& a : turn.provider_actions) {
        for (const auto& [name, b] : a.args) {
          if (b.source != BindingSource::kSeekerEntity) continue;
          if (b.turn < 0 || b.turn >= static_cast<int>(d.turns.size())) {
            ok = false;
            continue;
          }
          const auto& ents = d.turns[b.turn].seeker_entities;
          ok = ok && std::any_of(ents.begin(), ents.end(),
                                 [&](const EntityMention& m) { return m.start == b.start && m.end == b.end; });
        }
      }
    }
    if (!ok) bad.push_back(d.id);
  }
  if (bad.empty()) return;
  std::string msg = "bindings point at unannotated spans in:";
  for (const auto& id : bad) msg += " " + id;
  throw Error(ErrorCode::kAnnotationGap, msg);
}

EvalReport evaluate(const std::vector<Dialogue>& corpus, const PredictorFactory& factory, const DomainSchema& schema,
                    const EvalOptions& options) {
  check_annotations(corpus);
  unsigned threads = options.threads > 0 ? static_cast<unsigned>(options.threads) : std::thread::hardware_concurrency();
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(corpus.size(), 1))));
  std::vector<Tally> partial(threads);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto worker = [&](unsigned w) {
    try {
      for (std::size_t k = next++; k < corpus.size(); k = next++) {
        auto predictor = factory(corpus[k]);
        tally_dialogue(corpus[k], *predictor, schema, partial[w]);
      }
    } catch (...) {
      std::lock_guard<std::mutex> lock(failure_mu);
      if (!failure) failure = std::current_exception();
      next = corpus.size();
    }
  };
  if (threads == 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < threads; ++w) pool.emplace_back(worker, w);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  Tally total{};
  for (const auto& p : partial) {
    for (int r = 0; r < kRowCount; ++r) total[r] += p[r];
  }
  EvalReport report;
  for (int r = 0; r < kRowCount; ++r) report.rows.emplace_back(std::string(kReportRows[r]), total[r]);
  report.stats = corpus_stats(corpus);
  report.config_fingerprint = options.config_fingerprint;
  return report;
}

EvalReport evaluate(const std::vector<Dialogue>& corpus, const ModelBundle& bundle, const DomainSchema& schema,
                    const EvalOptions& options) {
  bundle.check_schema(schema);
  EvalOptions opts = options;
  if (opts.config_fingerprint.empty()) opts.config_fingerprint = config_fingerprint(bundle);
  return evaluate(
      corpus, [&](const Dialogue&) { return std::make_unique<ModelPredictor>(bundle); }, schema, opts);
}

std::string config_fingerprint(const ModelBundle& bundle) {
  const std::string canon = std::to_string(bundle.fingerprint()) + "|" + bundle.config().to_json().dump();
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(canon)));
  return buf;
}

EvalSetConfig EvalSetConfig::full_scale() {
  EvalSetConfig c;
  c.n_train = 50000;
  c.n_in_sample = 500;
  c.n_out_of_sample = 500;
  return c;
}

EvalSets build_eval_sets(const DomainSchema& schema, const EvalSetConfig& config) {
  EvalSets sets;
  SplitConfig split = config.split;
  auto [train_schema, eval_schema] = split_out_of_sample(schema, split);
  sets.train_schema = std::move(train_schema);
  sets.eval_schema = std::move(eval_schema);
  const TransitionMatrix tm = estimate_transitions(schema.seed_dialogues, config.mixing, schema);

  auto make = [&](const DomainSchema& s, int n, std::uint64_t stream, const char* prefix) {
    CorpusConfig cc = config.corpus;
    cc.n_dialogues = n;
    cc.seed = stream_seed(config.seed, stream);
    cc.id_prefix = prefix;
    return generate_corpus(s, cc, tm);
  };
  sets.train = make(sets.train_schema, config.n_train, 0, "train");
  sets.in_sample = make(sets.train_schema, config.n_in_sample, 1, "in");
  sets.out_of_sample = make(sets.eval_schema, config.n_out_of_sample, 2, "oos");
  return sets;
}

std::string EvalSets::stats_table() const {
  return format_stats_table({{"train", corpus_stats(train)},
                             {"in-sample", corpus_stats(in_sample)},
                             {"out-of-sample", corpus_stats(out_of_sample)}});
}

double unseen_entity_fraction(const std::vector<Dialogue>& train, const std::vector<Dialogue>& eval) {
  int longest = 1;
  for (const auto& d : eval) {
    for (const auto& t : d.turns) {
      for (const auto& m : t.seeker_entities) longest = std::max(longest, m.length());
    }
  }
  std::unordered_set<std::string> grams;
  for (const auto& d : train) {
    for (const auto& t : d.turns) {
      const auto& tok = t.seeker_utterance.tokens;
      for (std::size_t s = 0; s < tok.size(); ++s) {
        std::string g;
        for (std::size_t n = 0; n < static_cast<std::size_t>(longest) && s + n < tok.size(); ++n) {
          g += (n == 0 ? "" : " ") + tok[s + n];
          grams.insert(g);
        }
      }
    }
  }
  long total = 0;
  long unseen = 0;
  for (const auto& d : eval) {
    for (const auto& t : d.turns) {
      const auto& tok = t.seeker_utterance.tokens;
      for (const auto& m : t.seeker_entities) {
        std::vector<std::string> span(tok.begin() + m.start, tok.begin() + m.end);
        ++total;
        unseen += grams.count(join_tokens(span)) == 0 ? 1 : 0;
      }
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(unseen) / static_cast<double>(total);
}

bool replay_dialogue(const Dialogue& dialogue, Predictor& predictor, DialogueManager& manager,
                     const std::string& user_id) {
  SessionState state = manager.open_session(user_id);
  for (const Turn& turn : dialogue.turns) {
    if (state.phase != Phase::kAwaitUser) return false;
    const auto steps = manager.handle_utterance(state, turn.seeker_utterance.text, predictor);
    if (steps.size() != turn.provider_actions.size()) return false;
    for (std::size_t k = 0; k < steps.size(); ++k) {
      const ActionRecord& got = steps[k].action;
      const ActionRecord& want = turn.provider_actions[k];
      if (got.name != want.name || got.result_ref != want.result_ref || got.empty_result != want.empty_result ||
          got.args.size() != want.args.size()) {
        return false;
      }
      for (const auto& [name, b] : want.args) {
        auto it = got.args.find(name);
        if (it == got.args.end() || !it->second.same_target(b)) return false;
      }
    }
  }
  return state.phase == Phase::kEnded;
}

double free_running_success(const std::vector<Dialogue>& corpus, const PredictorFactory& factory,
                            const DomainSchema& schema) {
  if (corpus.empty()) return 0.0;
  long ok = 0;
  for (const auto& d : corpus) {
    PreferenceKb kb;
    DialogueManager manager(schema, kb);
    auto predictor = factory(d);
    ok += replay_dialogue(d, *predictor, manager, "replay") ? 1 : 0;
  }
  return static_cast<double>(ok) / static_cast<double>(corpus.size());
}

double free_running_success(const std::vector<Dialogue>& corpus, const ModelBundle& bundle,
                            const DomainSchema& schema) {
  bundle.check_schema(schema);
  return free_running_success(
      corpus, [&](const Dialogue&) { return std::make_unique<ModelPredictor>(bundle); }, schema);
}

double AblationResult::ner_per_turn_delta() const {
  return with_features.row("NER").per_turn() - without_features.row("NER").per_turn();
}

double AblationResult::ner_per_action_delta() const {
  return with_features.row("NER").per_action() - without_features.row("NER").per_action();
}

std::string AblationResult::format_table() const {
  std::string out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-12s %14s %16s\n", "model", "ACC per-turn", "ACC per-action");
  out += buf;
  const Accuracy& w = with_features.row("NER");
  const Accuracy& wo = without_features.row("NER");
  std::snprintf(buf, sizeof buf, "%-12s %14s %16s\n", "NER w/ CF", pct(w.per_turn()).c_str(),
                pct(w.per_action()).c_str());
  out += buf;
  std::snprintf(buf, sizeof buf, "%-12s %14s %16s\n", "NER w/o CF", pct(wo.per_turn()).c_str(),
                pct(wo.per_action()).c_str());
  out += buf;
  return out;
}

AblationResult ablate_catalog_features(const std::vector<Dialogue>& train_corpus, const std::vector<Dialogue>& eval,
                                       const DomainSchema& feature_schema, const TrainConfig& config) {
  TrainConfig with = config;
  TrainConfig without = config;
  with.model.catalog_features = true;
  without.model.catalog_features = false;
  AblationResult r;
  r.config_diff = nlohmann::json::diff(with.model.to_json(), without.model.to_json());
  const TrainResult a = train(train_corpus, feature_schema, with);
  r.with_features = evaluate(eval, a.bundle, feature_schema);
  const TrainResult b = train(train_corpus, feature_schema, without);
  r.without_features = evaluate(eval, b.bundle, feature_schema);
  return r;
}

}  // namespace pref_teach
