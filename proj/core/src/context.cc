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

#include "pref_teach/context.h"

#include <algorithm>
#include <map>

#include "pref_teach/tokenize.h"

namespace pref_teach {

std::string_view anchor_mode_name(AnchorMode mode) {
  return mode == AnchorMode::kFirstToken ? "first-token" : "per-token";
}

std::optional<AnchorMode> parse_anchor_mode(std::string_view name) {
  if (name == "first-token") return AnchorMode::kFirstToken;
  if (name == "per-token") return AnchorMode::kPerToken;
  return std::nullopt;
}

std::vector<std::vector<int>> CatalogFeatureMatrix::plane(int n) const {
  std::vector<std::vector<int>> out(tokens_, std::vector<int>(types_, 0));
  for (int t = 0; t < tokens_; ++t) {
    for (int e = 0; e < types_; ++e) out[t][e] = at(t, n, e);
  }
  return out;
}

CatalogFeatureMatrix catalog_features(const std::vector<std::string>& tokens, const std::vector<Catalog>& catalogs,
                                      int n_max, AnchorMode anchor) {
  const int len = static_cast<int>(tokens.size());
  const int types = static_cast<int>(catalogs.size());
  CatalogFeatureMatrix m(len, std::max(n_max, 1), types);
  if (len == 0 || types == 0) return m;
  std::vector<std::string> norm(tokens.size());
  for (int t = 0; t < len; ++t) norm[t] = normalize_text(tokens[t]);
  for (int e = 0; e < types; ++e) {
    const Catalog& cat = catalogs[e];
    for (int n = 1; n <= m.n_max(); ++n) {
      for (int s = 0; s + n <= len; ++s) {
        std::string gram = norm[s];
        for (int k = 1; k < n; ++k) gram += " " + norm[s + k];
        if (!cat.contains(gram)) continue;
        if (anchor == AnchorMode::kFirstToken) {
          m.set(s, n, e);
        } else {
          for (int k = 0; k < n; ++k) m.set(s + k, n, e);
        }
      }
    }
  }
  return m;
}

std::string action_key(const ActionRecord& action) {
  return action.empty_result ? action.name + "#empty" : action.name;
}

int DialogueContext::actions_in_turn(int turn) const {
  int n = 0;
  for (const auto& a : actions) n += a.turn == turn ? 1 : 0;
  return n;
}

int DialogueContext::find_entity(int turn, int start, int end) const {
  for (std::size_t i = 0; i < entities.size(); ++i) {
    const auto& e = entities[i];
    if (e.turn == turn && e.mention.start == start && e.mention.end == end) return static_cast<int>(i);
  }
  return -1;
}

void ContextStore::begin_turn(std::vector<std::string> tokens, std::vector<EntityMention> entities) {
  context_.utterances.push_back(std::move(tokens));
  const int turn = context_.current_turn();
  for (auto& m : entities) context_.entities.push_back({turn, std::move(m), false});
}

void ContextStore::record(const ActionRecord& action) {
  if (action.kind == ActionKind::kApi) {
    for (const auto& [name, b] : action.args) {
      if (b.source != BindingSource::kSeekerEntity) continue;
      const int idx = context_.find_entity(b.turn, b.start, b.end);
      if (idx >= 0) context_.entities[idx].consumed = true;
    }
  }
  context_.actions.push_back({context_.current_turn(), action, action_key(action)});
}

std::optional<std::string> ContextStore::latest_result(std::string_view result_type,
                                                       const DomainSchema& schema) const {
  return pref_teach::latest_result(context_, result_type, schema);
}

std::optional<std::string> latest_result(const DialogueContext& context, std::string_view result_type,
                                         const DomainSchema& schema) {
  for (auto it = context.actions.rbegin(); it != context.actions.rend(); ++it) {
    if (!it->action.result_ref) continue;
    const ActionSignature* sig = schema.find_signature(it->action.name);
    if (sig != nullptr && sig->produces && *sig->produces == result_type) return it->action.result_ref;
  }
  return std::nullopt;
}

}  // namespace pref_teach
