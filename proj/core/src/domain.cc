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

#include "pref_teach/domain.h"

#include <algorithm>

#include "pref_teach/tokenize.h"

namespace pref_teach {

Utterance Utterance::from_text(std::string text, Speaker speaker) {
  Utterance u;
  u.tokens = tokenize(text);
  u.text = std::move(text);
  u.speaker = speaker;
  return u;
}

ArgumentBinding ArgumentBinding::seeker_entity(int turn, int start, int end, std::string value) {
  ArgumentBinding b;
  b.source = BindingSource::kSeekerEntity;
  b.turn = turn;
  b.start = start;
  b.end = end;
  b.value = std::move(value);
  return b;
}

ArgumentBinding ArgumentBinding::api_result(std::string ref) {
  ArgumentBinding b;
  b.source = BindingSource::kApiResult;
  b.result_ref = std::move(ref);
  return b;
}

ArgumentBinding ArgumentBinding::constant(std::string literal) {
  ArgumentBinding b;
  b.source = BindingSource::kConstant;
  b.literal = std::move(literal);
  return b;
}

bool ArgumentBinding::same_target(const ArgumentBinding& other) const {
  if (source != other.source) return false;
  switch (source) {
    case BindingSource::kSeekerEntity:
      return turn == other.turn && start == other.start && end == other.end;
    case BindingSource::kApiResult:
      return result_ref == other.result_ref;
    case BindingSource::kConstant:
      return literal == other.literal;
  }
  return false;
}

std::string_view action_kind_name(ActionKind kind) {
  switch (kind) {
    case ActionKind::kApi: return "api";
    case ActionKind::kNlg: return "nlg";
    case ActionKind::kSys: return "sys";
  }
  return "sys";
}

std::optional<ActionKind> parse_action_kind(std::string_view name) {
  if (name == "api" || name == "API") return ActionKind::kApi;
  if (name == "nlg" || name == "NLG") return ActionKind::kNlg;
  if (name == "sys" || name == "SYS") return ActionKind::kSys;
  return std::nullopt;
}

std::string_view polarity_name(Polarity polarity) {
  switch (polarity) {
    case Polarity::kLike: return "like";
    case Polarity::kDislike: return "dislike";
    case Polarity::kConditional: return "conditional";
  }
  return "like";
}

std::optional<Polarity> parse_polarity(std::string_view name) {
  if (name == "like") return Polarity::kLike;
  if (name == "dislike") return Polarity::kDislike;
  if (name == "conditional") return Polarity::kConditional;
  return std::nullopt;
}

std::vector<std::string> EntityTransferGraph::api_sequence() const {
  std::vector<std::string> seq;
  for (const auto& v : vertices) {
    if (v.kind == GoalVertex::Kind::kApiCall) seq.push_back(v.api);
  }
  return seq;
}

std::vector<int> EntityTransferGraph::api_vertices() const {
  std::vector<int> out;
  for (int i = 0; i < static_cast<int>(vertices.size()); ++i) {
    if (vertices[i].kind == GoalVertex::Kind::kApiCall) out.push_back(i);
  }
  return out;
}

int EntityTransferGraph::source_of(int api_vertex, std::string_view argument) const {
  for (const auto& e : edges) {
    if (e.to == api_vertex && e.argument == argument) return e.from;
  }
  return -1;
}

int EntityTransferGraph::seeker_entity_count() const {
  return static_cast<int>(std::count_if(vertices.begin(), vertices.end(), [](const GoalVertex& v) {
    return v.kind == GoalVertex::Kind::kSeekerEntity;
  }));
}

std::size_t Dialogue::action_count() const {
  std::size_t n = 0;
  for (const auto& t : turns) n += t.provider_actions.size();
  return n;
}

}  // namespace pref_teach
