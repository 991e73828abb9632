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

#ifndef PREF_TEACH_EVAL_H_
#define PREF_TEACH_EVAL_H_

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "pref_teach/domain.h"
#include "pref_teach/manager.h"
#include "pref_teach/model.h"
#include "pref_teach/predictor.h"
#include "pref_teach/schema.h"
#include "pref_teach/simulator.h"
#include "pref_teach/trainer.h"

namespace pref_teach {

// Report rows, in display order.
inline constexpr std::array<std::string_view, 5> kReportRows = {"NER", "AP", "AF", "AP+AF", "NER+AP+AF"};

struct Accuracy {
  long correct_turns = 0;
  long turns = 0;
  long correct_actions = 0;
  long actions = 0;

  double per_turn() const { return turns == 0 ? 0.0 : static_cast<double>(correct_turns) / turns; }
  double per_action() const { return actions == 0 ? 0.0 : static_cast<double>(correct_actions) / actions; }
  Accuracy& operator+=(const Accuracy& o);
};

struct EvalReport {
  // One entry per kReportRows name, same order.
  std::vector<std::pair<std::string, Accuracy>> rows;
  CorpusStats stats;
  std::string config_fingerprint;
  // Fraction of dialogues the agent completes exactly when it runs on its
  // own predictions (supplementary; absent when not measured).
  std::optional<double> success_rate;

  const Accuracy& row(std::string_view name) const;
  nlohmann::json to_json() const;
  // Table with one line per row: model, ACC per-turn, ACC per-action.
  std::string format_table(std::string_view title = "") const;
};

using PredictorFactory = std::function<std::unique_ptr<Predictor>(const Dialogue&)>;

struct EvalOptions {
  // 0 = hardware concurrency.
  int threads = 0;
  std::string config_fingerprint;
};

// Teacher-forced evaluation: every prediction is made on the gold history.
// NER is exact span-and-type match of the turn's mention set (its verdict
// is shared by the actions of that turn), AP is top-1 name match and AF is
// exact match of every argument binding. A turn is correct for a model iff
// all its predictions in the turn are. Throws Error(kAnnotationGap) listing
// dialogues whose bindings point at unannotated spans.
EvalReport evaluate(const std::vector<Dialogue>& corpus, const PredictorFactory& factory, const DomainSchema& schema,
                    const EvalOptions& options = {});
EvalReport evaluate(const std::vector<Dialogue>& corpus, const ModelBundle& bundle, const DomainSchema& schema,
                    const EvalOptions& options = {});

// Fails with kAnnotationGap naming every offending dialogue.
void check_annotations(const std::vector<Dialogue>& corpus);

struct EvalSetConfig {
  int n_train = 2000;
  int n_in_sample = 200;
  int n_out_of_sample = 200;
  std::uint64_t seed = 1;
  CorpusConfig corpus;
  SplitConfig split;
  MixingRatio mixing;

  // Full-scale sizes: 50,000 / 500 / 500.
  static EvalSetConfig full_scale();
};

struct EvalSets {
  DomainSchema train_schema;
  DomainSchema eval_schema;
  std::vector<Dialogue> train;
  std::vector<Dialogue> in_sample;
  std::vector<Dialogue> out_of_sample;

  std::string stats_table() const;
};

// Train and in-sample sets come from the train side of the paraphrase and
// catalog split (independent seeds); the out-of-sample set from the held
// out side.
EvalSets build_eval_sets(const DomainSchema& schema, const EvalSetConfig& config);

// Fraction of entity mentions in `eval` whose normalized value never occurs
// as a token n-gram in any utterance of `train`.
double unseen_entity_fraction(const std::vector<Dialogue>& train, const std::vector<Dialogue>& eval);

struct AblationResult {
  EvalReport with_features;
  EvalReport without_features;
  nlohmann::json config_diff;

  double ner_per_turn_delta() const;
  double ner_per_action_delta() const;
  std::string format_table() const;
};

// Trains two bundles that differ only in the catalog-feature flag and
// evaluates both on `eval`. `feature_schema` supplies the catalogs.
AblationResult ablate_catalog_features(const std::vector<Dialogue>& train_corpus, const std::vector<Dialogue>& eval,
                                       const DomainSchema& feature_schema, const TrainConfig& config);

// Feeds the seeker utterances of `dialogue` to the manager in a fresh
// session and reports whether every agent action (name, bindings, result
// handle, empty flag) matches the annotation.
bool replay_dialogue(const Dialogue& dialogue, Predictor& predictor, DialogueManager& manager,
                     const std::string& user_id);

// Free-running end-to-end success: fraction of dialogues replayed exactly,
// each against its own empty in-memory KB.
double free_running_success(const std::vector<Dialogue>& corpus, const PredictorFactory& factory,
                            const DomainSchema& schema);
double free_running_success(const std::vector<Dialogue>& corpus, const ModelBundle& bundle,
                            const DomainSchema& schema);

// Fingerprint of a bundle plus its model config, as hex.
std::string config_fingerprint(const ModelBundle& bundle);

}  // namespace pref_teach

#endif  // PREF_TEACH_EVAL_H_
