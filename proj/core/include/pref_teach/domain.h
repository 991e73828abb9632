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

#ifndef PREF_TEACH_DOMAIN_H_
#define PREF_TEACH_DOMAIN_H_

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace pref_teach {

enum class Speaker { kSeeker, kProvider };

struct Utterance {
  std::string text;
  std::vector<std::string> tokens;
  Speaker speaker = Speaker::kSeeker;

  static Utterance from_text(std::string text, Speaker speaker = Speaker::kSeeker);
  bool operator==(const Utterance&) const = default;
};

// Half-open token span [start, end) tagged with an entity type. `value` is
// the normalized surface form of the span.
struct EntityMention {
  int start = 0;
  int end = 0;
  std::string entity_type;
  std::string value;

  int length() const { return end - start; }
  bool overlaps(const EntityMention& other) const {
    return start < other.end && other.start < end;
  }
  bool operator==(const EntityMention&) const = default;
  auto operator<=>(const EntityMention&) const = default;
};

enum class BindingSource { kSeekerEntity, kApiResult, kConstant };

// Where an argument value comes from. Exactly one payload is meaningful:
// the token span (turn, start, end) for seeker entities, `result_ref` for
// API results and `literal` for constants. `value` caches the surface form
// of a seeker entity.
struct ArgumentBinding {
  BindingSource source = BindingSource::kConstant;
  int turn = -1;
  int start = -1;
  int end = -1;
  std::string value;
  std::string result_ref;
  std::string literal;

  static ArgumentBinding seeker_entity(int turn, int start, int end, std::string value);
  static ArgumentBinding api_result(std::string ref);
  static ArgumentBinding constant(std::string literal);

  // Same referent; ignores the cached `value`.
  bool same_target(const ArgumentBinding& other) const;
  bool operator==(const ArgumentBinding&) const = default;
};

enum class ActionKind { kApi, kNlg, kSys };

std::string_view action_kind_name(ActionKind kind);
std::optional<ActionKind> parse_action_kind(std::string_view name);

inline constexpr std::string_view kWaitForUserInput = "wait_for_user_input";
inline constexpr std::string_view kEndDialogue = "end_dialogue";

struct ActionRecord {
  ActionKind kind = ActionKind::kSys;
  std::string name;
  std::map<std::string, ArgumentBinding> args;
  std::optional<std::string> result_ref;
  // API outcome annotation: the call succeeded but returned nothing.
  bool empty_result = false;

  bool is_sys(std::string_view sys_name) const {
    return kind == ActionKind::kSys && name == sys_name;
  }
  bool operator==(const ActionRecord&) const = default;
};

struct Turn {
  Utterance seeker_utterance;
  std::vector<EntityMention> seeker_entities;
  std::vector<ActionRecord> provider_actions;
  // Seeker dialogue acts realized in this utterance.
  std::vector<std::string> user_nlgs;
  // Stored verbatim; no interpretation of the distinction is attempted.
  std::optional<std::string> partially_normalized_value;
  std::optional<std::string> fully_normalized_value;

  bool operator==(const Turn&) const = default;
};

enum class Polarity { kLike, kDislike, kConditional };

std::string_view polarity_name(Polarity polarity);
std::optional<Polarity> parse_polarity(std::string_view name);

// Goal DAG: seeker-supplied entities and API calls; edges carry argument
// provenance (producer vertex -> consumer API vertex, argument name).
struct GoalVertex {
  enum class Kind { kSeekerEntity, kApiCall };
  Kind kind = Kind::kSeekerEntity;
  std::string entity_type;  // kSeekerEntity
  std::string value;        // kSeekerEntity
  std::string api;          // kApiCall

  bool operator==(const GoalVertex&) const = default;
};

struct GoalEdge {
  int from = 0;
  int to = 0;
  std::string argument;

  bool operator==(const GoalEdge&) const = default;
};

struct EntityTransferGraph {
  std::vector<GoalVertex> vertices;
  std::vector<GoalEdge> edges;

  // API names in vertex order.
  std::vector<std::string> api_sequence() const;
  std::vector<int> api_vertices() const;
  // Producer vertex for `argument` of API vertex `api_vertex`, or -1.
  int source_of(int api_vertex, std::string_view argument) const;
  int seeker_entity_count() const;
  bool operator==(const EntityTransferGraph&) const = default;
};

struct DialogueMetadata {
  std::uint64_t seed = 0;
  std::vector<std::string> template_ids;

  bool operator==(const DialogueMetadata&) const = default;
};

struct Dialogue {
  std::string id;
  EntityTransferGraph goal;
  std::vector<Turn> turns;
  DialogueMetadata metadata;

  std::size_t action_count() const;
  bool operator==(const Dialogue&) const = default;
};

}  // namespace pref_teach

#endif  // PREF_TEACH_DOMAIN_H_
