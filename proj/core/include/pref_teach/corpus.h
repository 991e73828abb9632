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

#ifndef PREF_TEACH_CORPUS_H_
#define PREF_TEACH_CORPUS_H_

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "pref_teach/domain.h"

namespace pref_teach {

struct DomainSchema;

// Corpus records: one dialogue per line. Field names follow the annotation
// markup (type, utterance, user_nlgs, normalized_value, ...). Derived fields
// such as normalized_value are recomputed on write, so serialize(parse(x))
// is byte-identical for any x produced by serialize.
nlohmann::json dialogue_to_json(const Dialogue& dialogue);
Dialogue dialogue_from_json(const nlohmann::json& record);

std::string serialize_dialogue(const Dialogue& dialogue);
Dialogue parse_dialogue(std::string_view line);

void write_corpus(const std::filesystem::path& path, const std::vector<Dialogue>& dialogues);
std::vector<Dialogue> read_corpus(const std::filesystem::path& path);

nlohmann::json goal_to_json(const EntityTransferGraph& goal);
EntityTransferGraph goal_from_json(const nlohmann::json& j);

// Human-readable action form, e.g.
//   setSportAffinity(sport_team=yankees) -> setSportAffinityResult1
std::string format_action(const ActionRecord& action);

// Compact markup used for seed dialogues and hand-written fixtures:
//
//   {"id": "seed-01",
//    "turns": [{"user": "The [Yankees|sport_team] are my favorite team",
//               "nlg": ["inform_setSportAffinity"],
//               "actions": ["setSportAffinity(sport_team=yankees) -> setSportAffinityResult1",
//                           "notify_setSportAffinity_success(result=setSportAffinityResult1)",
//                           "end_dialogue()"]}]}
//
// Mentions are written [surface|type] or [surface|type|value]. Argument
// values resolve to the earliest mention with that value that no earlier
// API consumed; `name=$handle` forces a result reference and 'text' a
// constant. A trailing " [empty]" marks an API that returned nothing.
// Action kinds come from the schema signatures; the goal graph is derived
// from the goal APIs and their entity bindings.
Dialogue parse_markup_dialogue(const nlohmann::json& markup, const DomainSchema& schema);

}  // namespace pref_teach

#endif  // PREF_TEACH_CORPUS_H_
