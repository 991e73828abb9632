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

#include "pref_teach/predictor.h"

#include "pref_teach/error.h"

namespace pref_teach {

const std::vector<TurnEncoding>& ModelPredictor::encodings(const DialogueContext& ctx) {
  const std::size_t n = ctx.utterances.size();
  if (cache_.size() > n) cache_.resize(n);
  for (std::size_t t = 0; t < n; ++t) {
    if (t < cache_.size()) {
      if (cache_[t].tokens != ctx.utterances[t]) cache_[t] = bundle_.encode_turn(ctx.utterances[t]);
    } else {
      cache_.push_back(bundle_.encode_turn(ctx.utterances[t]));
    }
  }
  return cache_;
}

std::vector<EntityMention> ModelPredictor::recognize(const std::vector<std::string>& tokens, int turn) {
  if (turn < 0) throw Error(ErrorCode::kInvalidArgument, "negative turn index");
  const std::size_t t = static_cast<std::size_t>(turn);
  if (cache_.size() <= t) cache_.resize(t + 1);
  if (cache_[t].tokens != tokens || cache_[t].states.cols() != static_cast<long>(tokens.size())) {
    cache_[t] = bundle_.encode_turn(tokens);
  }
  return bundle_.ner_decode(cache_[t]);
}

std::vector<ActionScore> ModelPredictor::predict_actions(const DialogueContext& ctx, int n_best) {
  const auto& encs = encodings(ctx);
  return bundle_.ap_rank(bundle_.encode_context(ctx, encs).c, n_best);
}

int ModelPredictor::fill_argument(const DialogueContext& ctx, const std::string& action, const ArgumentSpec& arg) {
  const auto& encs = encodings(ctx);
  const Vec c = bundle_.encode_context(ctx, encs).c;
  last_candidates_ = bundle_.af_scores(ctx, encs, c, action, arg);
  int best = -1;
  double best_p = -1.0;
  for (const auto& cand : last_candidates_) {
    if (cand.masked) continue;
    if (cand.probability > best_p) {
      best = cand.entity;
      best_p = cand.probability;
    }
  }
  if (best < 0) {
    throw Error(ErrorCode::kNoLegalCandidate, "no " + arg.type + " candidate for " + action + "." + arg.name);
  }
  return best;
}

std::vector<EntityMention> GoldOracle::recognize(const std::vector<std::string>&, int turn) {
  if (turn < 0 || turn >= static_cast<int>(dialogue_.turns.size())) return {};
  return dialogue_.turns[turn].seeker_entities;
}

const ActionRecord& GoldOracle::gold_action(const DialogueContext& ctx) const {
  const int turn = ctx.current_turn();
  if (turn < 0 || turn >= static_cast<int>(dialogue_.turns.size())) {
    throw Error(ErrorCode::kPrecondition, "oracle has no turn " + std::to_string(turn));
  }
  const auto& actions = dialogue_.turns[turn].provider_actions;
  const int k = ctx.actions_in_turn(turn);
  if (k >= static_cast<int>(actions.size())) {
    throw Error(ErrorCode::kPrecondition, "oracle has no action " + std::to_string(k) + " in turn " +
                                              std::to_string(turn));
  }
  return actions[k];
}

std::vector<ActionScore> GoldOracle::predict_actions(const DialogueContext& ctx, int) {
  return {{gold_action(ctx).name, 1.0}};
}

int GoldOracle::fill_argument(const DialogueContext& ctx, const std::string& action, const ArgumentSpec& arg) {
  const ActionRecord& gold = gold_action(ctx);
  auto it = gold.args.find(arg.name);
  if (gold.name != action || it == gold.args.end() || it->second.source != BindingSource::kSeekerEntity) {
    throw Error(ErrorCode::kNoLegalCandidate, "oracle has no entity for " + action + "." + arg.name);
  }
  const int idx = ctx.find_entity(it->second.turn, it->second.start, it->second.end);
  if (idx < 0) throw Error(ErrorCode::kNoLegalCandidate, "gold entity for " + action + "." + arg.name + " not in context");
  return idx;
}

}  // namespace pref_teach
