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

#ifndef PREF_TEACH_CONTEXT_H_
#define PREF_TEACH_CONTEXT_H_

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pref_teach/domain.h"
#include "pref_teach/schema.h"

namespace pref_teach {

// Where an n-gram catalog match is marked: on its first token only, or on
// every token it covers.
enum class AnchorMode { kFirstToken, kPerToken };

std::string_view anchor_mode_name(AnchorMode mode);
std::optional<AnchorMode> parse_anchor_mode(std::string_view name);

// Binary indicators indexed [token][n - 1][entity type].
class CatalogFeatureMatrix {
 public:
  CatalogFeatureMatrix() = default;
  CatalogFeatureMatrix(int tokens, int n_max, int types)
      : tokens_(tokens), n_max_(n_max), types_(types),
        data_(static_cast<std::size_t>(tokens) * n_max * types, 0) {}

  int tokens() const { return tokens_; }
  int n_max() const { return n_max_; }
  int types() const { return types_; }
  std::uint8_t at(int token, int n, int type) const { return data_[offset(token, n, type)]; }
  void set(int token, int n, int type) { data_[offset(token, n, type)] = 1; }
  // Row for one n-gram order: [token][type].
  std::vector<std::vector<int>> plane(int n) const;

 private:
  std::size_t offset(int token, int n, int type) const {
    return (static_cast<std::size_t>(token) * n_max_ + (n - 1)) * types_ + type;
  }
  int tokens_ = 0;
  int n_max_ = 0;
  int types_ = 0;
  std::vector<std::uint8_t> data_;
};

// Marks n-grams (n = 1..n_max) of `tokens` that equal a value of catalog e,
// after normalization. Type index e follows the order of `catalogs`.
CatalogFeatureMatrix catalog_features(const std::vector<std::string>& tokens, const std::vector<Catalog>& catalogs,
                                      int n_max, AnchorMode anchor = AnchorMode::kFirstToken);

struct ContextEntity {
  int turn = 0;
  EntityMention mention;
  bool consumed = false;
};

struct ContextAction {
  int turn = 0;
  ActionRecord action;
  std::string key;
};

// "name", or "name#empty" for an API call that returned nothing.
std::string action_key(const ActionRecord& action);

// Everything the models may look at: utterances so far (the last one is the
// current turn), recognized entities with consumption flags, and actions.
struct DialogueContext {
  std::vector<std::vector<std::string>> utterances;
  std::vector<ContextEntity> entities;
  std::vector<ContextAction> actions;

  int current_turn() const { return static_cast<int>(utterances.size()) - 1; }
  int actions_in_turn(int turn) const;
  // Index into `entities` of the mention at (turn, start, end), or -1.
  int find_entity(int turn, int start, int end) const;
};

// Most recent result handle whose producing API yields `result_type`.
std::optional<std::string> latest_result(const DialogueContext& context, std::string_view result_type,
                                         const DomainSchema& schema);

// Turn-level context storage shared by training, evaluation and the
// dialogue manager. An entity is consumed once an API call binds it.
class ContextStore {
 public:
  void begin_turn(std::vector<std::string> tokens, std::vector<EntityMention> entities);
  void record(const ActionRecord& action);
  const DialogueContext& context() const { return context_; }

  std::optional<std::string> latest_result(std::string_view result_type, const DomainSchema& schema) const;

 private:
  DialogueContext context_;
};

}  // namespace pref_teach

#endif  // PREF_TEACH_CONTEXT_H_
