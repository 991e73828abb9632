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

#ifndef PREF_TEACH_SCHEMA_H_
#define PREF_TEACH_SCHEMA_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pref_teach/domain.h"

namespace pref_teach {

// Slot types carry preference values; confirmation/denial types are the
// builtin yes/no entities consumed by confirmation exchanges.
enum class EntityRole { kSlot, kConfirmation, kDenial };

struct EntityTypeDef {
  std::string name;
  EntityRole role = EntityRole::kSlot;
  // Whether goal sampling may reuse an existing vertex of this type.
  bool transferable = true;
};

// Catalog values are stored normalized. `extended_values` are values the
// deployed catalog knows about but the seed material never mentions
// (minor-league teams and the like).
struct Catalog {
  std::string entity_type;
  std::vector<std::string> values;
  std::vector<std::string> extended_values;

  std::vector<std::string> all_values() const;
  bool contains(std::string_view text) const;
};

struct ArgumentSpec {
  std::string name;
  std::string type;
  bool required = true;
};

enum class KbOp { kNone, kUpsert, kDelete, kDeleteAll, kRetrieve };

std::string_view kb_op_name(KbOp op);

// How an API maps onto the preference store.
struct KbMapping {
  KbOp op = KbOp::kNone;
  std::string domain;           // record domain for upsert/delete; filter for retrieve
  std::string entity_type;      // record entity type / retrieve filter
  std::string value_argument;   // argument holding the entity value
  std::string condition_argument;
  Polarity polarity = Polarity::kLike;
};

struct ActionSignature {
  std::string name;
  ActionKind kind = ActionKind::kApi;
  std::vector<ArgumentSpec> arguments;
  std::optional<std::string> produces;  // result type
  std::string result_name;              // handle prefix, e.g. getAllPreferenceResult
  std::string domain;
  bool destructive = false;
  // Goal APIs take part in goal sampling; auxiliary APIs are only issued
  // by the provider as part of another flow.
  bool goal = true;
  KbMapping kb;

  const ArgumentSpec* find_argument(std::string_view arg) const;
};

struct Template {
  std::string id;
  std::string act;
  std::string text;

  // Placeholder names in order of appearance, e.g. {sport_team}.
  std::vector<std::string> slots() const;
};

struct GoalDef {
  std::string name;
  std::string domain;
  std::vector<std::string> apis;
};

struct DomainSchema {
  std::string name;
  int version = 1;
  std::vector<std::string> domains;
  std::vector<EntityTypeDef> entity_types;
  std::vector<Catalog> catalogs;
  std::vector<ActionSignature> signatures;
  std::vector<GoalDef> goals;
  // Seeker-side paraphrase bank, keyed by dialogue act.
  std::vector<Template> seeker_templates;
  // Provider NLG rendering templates, keyed by NLG action name.
  std::vector<Template> provider_templates;
  std::vector<Dialogue> seed_dialogues;

  const EntityTypeDef* find_entity_type(std::string_view type) const;
  const Catalog* find_catalog(std::string_view type) const;
  Catalog* find_catalog(std::string_view type);
  const ActionSignature* find_signature(std::string_view name) const;
  bool is_result_type(std::string_view type) const;
  std::vector<std::string> entity_type_names() const;
  std::vector<const ActionSignature*> goal_apis() const;
  std::vector<const Template*> templates_for(std::string_view act) const;
  std::vector<const Template*> provider_templates_for(std::string_view act) const;
};

// Parses a schema document. Seed dialogues may be given either as full
// corpus records or in the compact markup form (see corpus.h). Throws
// Error(kParse) with a line number for malformed documents and
// Error(kDanglingReference) naming the offender for broken references.
DomainSchema parse_schema(std::string_view text);
DomainSchema load_schema(const std::filesystem::path& path);

// The bundled sports / restaurant / preference-management / weather schema.
const DomainSchema& default_schema();
std::string_view default_schema_text();

// Canonical serialization; parse_schema(schema_to_json(s)) round-trips.
std::string schema_to_json(const DomainSchema& schema);

void validate_schema(const DomainSchema& schema);

// FNV-1a over the canonical form of the structural parts (entity types,
// signatures). Catalogs and templates are excluded so a model trained on a
// catalog slice still serves the full catalog.
std::uint64_t structural_fingerprint(const DomainSchema& schema);

// Naming conventions shared by the simulator, the NLG bank and the manager.
std::string inform_act(std::string_view api);
std::string supply_act(std::string_view entity_type);
inline constexpr std::string_view kConfirmAct = "confirm";
inline constexpr std::string_view kDenyAct = "deny";

std::string notify_success_action(std::string_view api);
std::string notify_failure_action(std::string_view api);
std::string notify_cancelled_action(std::string_view api);
std::string confirm_action(std::string_view api);
std::string request_action(std::string_view entity_type);
inline constexpr std::string_view kFallbackClarification = "fallback_clarification";

}  // namespace pref_teach

#endif  // PREF_TEACH_SCHEMA_H_
