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

#ifndef PREF_TEACH_PREDICTOR_H_
#define PREF_TEACH_PREDICTOR_H_

#include <string>
#include <vector>

#include "pref_teach/context.h"
#include "pref_teach/domain.h"
#include "pref_teach/model.h"
#include "pref_teach/schema.h"

namespace pref_teach {

// The three decisions the agent makes. Evaluation and the dialogue manager
// drive any implementation through this interface.
class Predictor {
 public:
  virtual ~Predictor() = default;
  // Mentions in the seeker utterance of turn `turn`.
  virtual std::vector<EntityMention> recognize(const std::vector<std::string>& tokens, int turn) = 0;
  // Ranked next actions given the context (the last utterance is current).
  virtual std::vector<ActionScore> predict_actions(const DialogueContext& ctx, int n_best) = 0;
  // Index into ctx.entities of the chosen value for an entity-typed
  // argument. Throws Error(kNoLegalCandidate) when nothing fits.
  virtual int fill_argument(const DialogueContext& ctx, const std::string& action, const ArgumentSpec& arg) = 0;
};

// Serves a frozen bundle. Turn encodings are cached per dialogue; one
// instance per dialogue session.
class ModelPredictor : public Predictor {
 public:
  explicit ModelPredictor(const ModelBundle& bundle) : bundle_(bundle) {}

  std::vector<EntityMention> recognize(const std::vector<std::string>& tokens, int turn) override;
  std::vector<ActionScore> predict_actions(const DialogueContext& ctx, int n_best) override;
  int fill_argument(const DialogueContext& ctx, const std::string& action, const ArgumentSpec& arg) override;

  // Distribution over candidates from the last fill_argument call.
  const std::vector<CandidateScore>& last_candidates() const { return last_candidates_; }

 private:
  const std::vector<TurnEncoding>& encodings(const DialogueContext& ctx);

  const ModelBundle& bundle_;
  std::vector<TurnEncoding> cache_;
  std::vector<CandidateScore> last_candidates_;
};

// Answers from the gold annotation of one dialogue; used to check that the
// evaluation plumbing gives perfect scores to a perfect predictor.
class GoldOracle : public Predictor {
 public:
  explicit GoldOracle(const Dialogue& dialogue) : dialogue_(dialogue) {}

  std::vector<EntityMention> recognize(const std::vector<std::string>& tokens, int turn) override;
  std::vector<ActionScore> predict_actions(const DialogueContext& ctx, int n_best) override;
  int fill_argument(const DialogueContext& ctx, const std::string& action, const ArgumentSpec& arg) override;

 private:
  const ActionRecord& gold_action(const DialogueContext& ctx) const;

  const Dialogue& dialogue_;
};

}  // namespace pref_teach

#endif  // PREF_TEACH_PREDICTOR_H_
