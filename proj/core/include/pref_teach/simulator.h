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

#ifndef PREF_TEACH_SIMULATOR_H_
#define PREF_TEACH_SIMULATOR_H_

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pref_teach/domain.h"
#include "pref_teach/random.h"
#include "pref_teach/schema.h"

namespace pref_teach {

// Weights over the three sources of transition evidence.
struct MixingRatio {
  double seed_counts = 0.6;
  double shared_entities = 0.2;
  double input_output = 0.2;
};

// First-order chain over goal APIs with an explicit absorbing STOP column.
// rows[i] has apis.size() + 1 entries; the last one is STOP.
struct TransitionMatrix {
  std::vector<std::string> apis;
  std::vector<double> start;
  std::vector<std::vector<double>> rows;

  std::size_t size() const { return apis.size(); }
  std::size_t stop_index() const { return apis.size(); }
  // -1 when absent.
  int index_of(std::string_view api) const;
  // Throws Error(kInvalidArgument) unless every row and the start vector
  // are non-negative and sum to 1 within 1e-9.
  void validate() const;
};

// Estimates the chain from the goal-API sequences of the seeds. The count
// term uses add-one smoothing over next-API and STOP; the shared-entity and
// input-output terms only redistribute the non-STOP mass.
TransitionMatrix estimate_transitions(const std::vector<Dialogue>& seeds, const MixingRatio& mixing,
                                      const DomainSchema& schema);

struct GoalSamplerConfig {
  double transfer_prob = 0.3;
  int max_apis = 5;
  // Probability of drawing a fresh catalog value; otherwise a value seen in
  // the seeds for that entity type is reused (if any).
  double entity_resample_prob = 1.0;
  std::map<std::string, std::vector<std::string>> seed_values;
};

// Collects seed-observed entity values per type.
std::map<std::string, std::vector<std::string>> seed_entity_values(const std::vector<Dialogue>& seeds);

EntityTransferGraph sample_goal(const TransitionMatrix& tm, const DomainSchema& schema, Rng& rng,
                                const GoalSamplerConfig& config = {});

// Throws Error(kInvalidArgument) describing the first violated invariant:
// acyclicity, one incoming edge per required argument, type-correct edges.
void validate_goal(const EntityTransferGraph& goal, const DomainSchema& schema);

struct EventWeights {
  double omission = 1.0;
  double premature_update = 1.0;
  double aborted_reset = 1.0;
};

struct VariationConfig {
  double entity_resample_prob = 1.0;
  // Probability of sampling a paraphrase uniformly; otherwise the first
  // template of the group is used.
  double paraphrase_prob = 1.0;
  double error_injection_rate = 0.1;
  MixingRatio mixing;
  EventWeights event_weights;
  double transfer_prob = 0.3;
  int max_apis = 5;

  void validate() const;
};

struct SeekerPolicy {
  // Per-slot probability of leaving an entity out of the opening request.
  double withhold_prob = 0.3;
  std::vector<std::string> connectors = {" and ", " . also ", " , and then ", " . "};
};

// The provider is deterministic given the dialogue state: request missing
// slots, confirm destructive operations, call, notify, end.
struct ProviderPolicy {
  // Guard against runaway exchanges; exceeding it raises kDeadlock.
  int max_turns = 32;
};

struct RealizedUtterance {
  std::string text;
  std::vector<std::string> tokens;
  std::vector<EntityMention> mentions;
  std::vector<std::string> template_ids;
};

// Substitutes (entity type, value) bindings into the template's slots in
// order. Throws Error(kUnfilledSlot) when a slot has no binding left.
RealizedUtterance fill_template(const Template& tpl,
                                const std::vector<std::pair<std::string, std::string>>& bindings);

// Picks a template of `act` whose slot multiset equals the binding types
// (uniformly with probability paraphrase_prob, else the first) and fills it.
// Throws Error(kMissingTemplate) when the act has no matching template.
RealizedUtterance realize_nlg(std::string_view act,
                              const std::vector<std::pair<std::string, std::string>>& bindings,
                              const std::vector<Template>& bank, Rng& rng, double paraphrase_prob = 1.0);

void append_utterance(RealizedUtterance& into, const RealizedUtterance& part, std::string_view connector);

Dialogue run_interaction(const EntityTransferGraph& goal, const SeekerPolicy& seeker, const ProviderPolicy& provider,
                         const DomainSchema& schema, const VariationConfig& variation, Rng& rng);

struct CorpusConfig {
  int n_dialogues = 2000;
  VariationConfig variation;
  SeekerPolicy seeker;
  ProviderPolicy provider;
  std::uint64_t seed = 1;
  std::string id_prefix = "sim";
  // 0 = hardware concurrency. Output does not depend on this.
  int threads = 0;
};

struct CorpusStats {
  int n_apis = 0;
  int n_dialogues = 0;
  long n_actions = 0;
  long n_turns = 0;
};

CorpusStats corpus_stats(const std::vector<Dialogue>& corpus);
// Table layout: "#API  #dialogues  #actions  #turns".
std::string format_stats_table(const std::vector<std::pair<std::string, CorpusStats>>& rows);

std::vector<Dialogue> generate_corpus(const DomainSchema& schema, const CorpusConfig& config,
                                      const TransitionMatrix& tm);

struct SplitConfig {
  double template_fraction = 0.25;
  double catalog_fraction = 0.3;
  std::uint64_t seed = 1;
};

// Train/eval schemas with disjoint paraphrase templates and disjoint slot
// catalogs. The eval catalogs carry the held-out core values plus all
// extended values; the train catalogs drop the extended values.
std::pair<DomainSchema, DomainSchema> split_out_of_sample(const DomainSchema& schema, const SplitConfig& config);

}  // namespace pref_teach

#endif  // PREF_TEACH_SIMULATOR_H_
