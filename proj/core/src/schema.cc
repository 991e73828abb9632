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

#include "pref_teach/schema.h"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "pref_teach/corpus.h"
#include "pref_teach/error.h"
#include "pref_teach/tokenize.h"

namespace pref_teach {

using nlohmann::json;

extern const char* const kDefaultSchemaJson;

std::vector<std::string> Catalog::all_values() const {
  std::vector<std::string> out = values;
  out.insert(out.end(), extended_values.begin(), extended_values.end());
  return out;
}

bool Catalog::contains(std::string_view text) const {
  const std::string needle = normalize_text(text);
  return std::find(values.begin(), values.end(), needle) != values.end() ||
         std::find(extended_values.begin(), extended_values.end(), needle) !=
             extended_values.end();
}

std::string_view kb_op_name(KbOp op) {
  switch (op) {
    case KbOp::kNone: return "none";
    case KbOp::kUpsert: return "upsert";
    case KbOp::kDelete: return "delete";
    case KbOp::kDeleteAll: return "delete_all";
    case KbOp::kRetrieve: return "retrieve";
  }
  return "none";
}

const ArgumentSpec* ActionSignature::find_argument(std::string_view arg) const {
  for (const auto& a : arguments) {
    if (a.name == arg) return &a;
  }
  return nullptr;
}

std::vector<std::string> Template::slots() const {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while ((pos = text.find('{', pos)) != std::string::npos) {
    std::size_t close = text.find('}', pos);
    if (close == std::string::npos) break;
    out.push_back(text.substr(pos + 1, close - pos - 1));
    pos = close + 1;
  }
  return out;
}

const EntityTypeDef* DomainSchema::find_entity_type(std::string_view type) const {
  for (const auto& t : entity_types) {
    if (t.name == type) return &t;
  }
  return nullptr;
}

const Catalog* DomainSchema::find_catalog(std::string_view type) const {
  for (const auto& c : catalogs) {
    if (c.entity_type == type) return &c;
  }
  return nullptr;
}

Catalog* DomainSchema::find_catalog(std::string_view type) {
  for (auto& c : catalogs) {
    if (c.entity_type == type) return &c;
  }
  return nullptr;
}

const ActionSignature* DomainSchema::find_signature(std::string_view name) const {
  for (const auto& s : signatures) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

bool DomainSchema::is_result_type(std::string_view type) const {
  return std::any_of(signatures.begin(), signatures.end(),
                     [&](const ActionSignature& s) { return s.produces && *s.produces == type; });
}

std::vector<std::string> DomainSchema::entity_type_names() const {
  std::vector<std::string> out;
  for (const auto& t : entity_types) out.push_back(t.name);
  return out;
}

std::vector<const ActionSignature*> DomainSchema::goal_apis() const {
  std::vector<const ActionSignature*> out;
  for (const auto& s : signatures) {
    if (s.kind == ActionKind::kApi && s.goal) out.push_back(&s);
  }
  return out;
}

std::vector<const Template*> DomainSchema::templates_for(std::string_view act) const {
  std::vector<const Template*> out;
  for (const auto& t : seeker_templates) {
    if (t.act == act) out.push_back(&t);
  }
  return out;
}

std::vector<const Template*> DomainSchema::provider_templates_for(std::string_view act) const {
  std::vector<const Template*> out;
  for (const auto& t : provider_templates) {
    if (t.act == act) out.push_back(&t);
  }
  return out;
}

std::string inform_act(std::string_view api) { return "inform_" + std::string(api); }
std::string supply_act(std::string_view entity_type) {
  return "inform_" + std::string(entity_type);
}
std::string notify_success_action(std::string_view api) {
  return "notify_" + std::string(api) + "_success";
}
std::string notify_failure_action(std::string_view api) {
  return "notify_" + std::string(api) + "_failure";
}
std::string notify_cancelled_action(std::string_view api) {
  return "notify_" + std::string(api) + "_cancelled";
}
std::string confirm_action(std::string_view api) { return "confirm_" + std::string(api); }
std::string request_action(std::string_view entity_type) {
  return "request_" + std::string(entity_type);
}

namespace {

std::string_view role_name(EntityRole role) {
  switch (role) {
    case EntityRole::kSlot: return "slot";
    case EntityRole::kConfirmation: return "confirmation";
    case EntityRole::kDenial: return "denial";
  }
  return "slot";
}

EntityRole parse_role(const std::string& name) {
  if (name == "slot") return EntityRole::kSlot;
  if (name == "confirmation") return EntityRole::kConfirmation;
  if (name == "denial") return EntityRole::kDenial;
  throw Error(ErrorCode::kParse, "unknown entity role '" + name + "'");
}

KbOp parse_kb_op(const std::string& name) {
  for (KbOp op : {KbOp::kNone, KbOp::kUpsert, KbOp::kDelete, KbOp::kDeleteAll, KbOp::kRetrieve}) {
    if (kb_op_name(op) == name) return op;
  }
  throw Error(ErrorCode::kParse, "unknown kb op '" + name + "'");
}

std::vector<std::string> normalized_list(const json& j) {
  std::vector<std::string> out;
  for (const auto& v : j) out.push_back(normalize_text(v.get<std::string>()));
  return out;
}

DomainSchema schema_from_json(const json& j) {
  DomainSchema s;
  s.name = j.value("name", "");
  s.version = j.value("version", 1);
  if (j.contains("domains")) s.domains = j.at("domains").get<std::vector<std::string>>();

  for (const auto& e : j.at("entity_types")) {
    EntityTypeDef t;
    t.name = e.at("name").get<std::string>();
    t.role = parse_role(e.value("role", "slot"));
    t.transferable = e.value("transferable", t.role == EntityRole::kSlot);
    s.entity_types.push_back(std::move(t));
  }
  for (const auto& c : j.at("catalogs")) {
    Catalog cat;
    cat.entity_type = c.at("entity_type").get<std::string>();
    cat.values = normalized_list(c.at("values"));
    if (c.contains("extended_values")) cat.extended_values = normalized_list(c.at("extended_values"));
    s.catalogs.push_back(std::move(cat));
  }
  for (const auto& g : j.at("signatures")) {
    ActionSignature sig;
    sig.name = g.at("name").get<std::string>();
    auto kind = parse_action_kind(g.at("kind").get<std::string>());
    if (!kind) throw Error(ErrorCode::kParse, "signature '" + sig.name + "' has unknown kind");
    sig.kind = *kind;
    if (g.contains("arguments")) {
      for (const auto& a : g.at("arguments")) {
        sig.arguments.push_back({a.at("name").get<std::string>(), a.at("type").get<std::string>(),
                                 a.value("required", true)});
      }
    }
    if (g.contains("produces") && !g.at("produces").is_null()) {
      sig.produces = g.at("produces").get<std::string>();
    }
    sig.result_name = g.value("result_name", sig.name + "Result");
    sig.domain = g.value("domain", "");
    sig.destructive = g.value("destructive", false);
    sig.goal = g.value("goal", sig.kind == ActionKind::kApi);
    if (g.contains("kb")) {
      const auto& k = g.at("kb");
      sig.kb.op = parse_kb_op(k.value("op", "none"));
      sig.kb.domain = k.value("domain", "");
      sig.kb.entity_type = k.value("entity_type", "");
      sig.kb.value_argument = k.value("value_argument", "");
      sig.kb.condition_argument = k.value("condition_argument", "");
      auto pol = parse_polarity(k.value("polarity", "like"));
      if (!pol) throw Error(ErrorCode::kParse, "signature '" + sig.name + "' has unknown polarity");
      sig.kb.polarity = *pol;
    }
    s.signatures.push_back(std::move(sig));
  }
  if (j.contains("goals")) {
    for (const auto& g : j.at("goals")) {
      s.goals.push_back({g.at("name").get<std::string>(), g.value("domain", ""),
                         g.at("apis").get<std::vector<std::string>>()});
    }
  }
  auto read_templates = [](const json& arr, std::vector<Template>& out) {
    std::map<std::string, int> per_act;
    for (const auto& t : arr) {
      Template tpl;
      tpl.act = t.at("act").get<std::string>();
      tpl.text = t.at("text").get<std::string>();
      int k = ++per_act[tpl.act];
      tpl.id = t.value("id", tpl.act + "#" + std::to_string(k));
      out.push_back(std::move(tpl));
    }
  };
  if (j.contains("seeker_templates")) read_templates(j.at("seeker_templates"), s.seeker_templates);
  if (j.contains("provider_templates")) read_templates(j.at("provider_templates"), s.provider_templates);

  if (j.contains("seed_dialogues")) {
    for (const auto& d : j.at("seed_dialogues")) {
      bool markup = d.contains("turns") && !d.at("turns").empty() &&
                    d.at("turns").at(0).contains("user") && d.at("turns").at(0).at("user").is_string();
      s.seed_dialogues.push_back(markup ? parse_markup_dialogue(d, s) : dialogue_from_json(d));
    }
  }
  return s;
}

int line_of(std::string_view text, std::size_t byte) {
  byte = std::min(byte, text.size());
  return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<long>(byte), '\n'));
}

}  // namespace

void validate_schema(const DomainSchema& s) {
  auto dangling = [](const std::string& what) { throw Error(ErrorCode::kDanglingReference, what); };

  std::set<std::string> types;
  for (const auto& t : s.entity_types) {
    if (!types.insert(t.name).second) {
      throw Error(ErrorCode::kInvalidArgument, "duplicate entity type '" + t.name + "'");
    }
  }
  for (const auto& c : s.catalogs) {
    if (!types.count(c.entity_type)) dangling("catalog for undeclared entity type '" + c.entity_type + "'");
  }
  for (const auto& t : s.entity_types) {
    const Catalog* cat = s.find_catalog(t.name);
    if (cat == nullptr) dangling("entity type '" + t.name + "' has no catalog");
    if (cat->values.empty()) {
      throw Error(ErrorCode::kInvalidArgument, "catalog '" + t.name + "' has no values");
    }
  }
  std::set<std::string> names;
  for (const auto& sig : s.signatures) {
    if (!names.insert(sig.name).second) {
      throw Error(ErrorCode::kInvalidArgument, "duplicate signature '" + sig.name + "'");
    }
    std::set<std::string> args;
    bool has_confirmation = false;
    for (const auto& a : sig.arguments) {
      if (!args.insert(a.name).second) {
        throw Error(ErrorCode::kInvalidArgument,
                    "signature '" + sig.name + "' repeats argument '" + a.name + "'");
      }
      const EntityTypeDef* et = s.find_entity_type(a.type);
      if (et == nullptr && !s.is_result_type(a.type)) {
        dangling("argument '" + sig.name + "." + a.name + "' has undeclared type '" + a.type + "'");
      }
      if (et != nullptr && et->role == EntityRole::kConfirmation) has_confirmation = true;
    }
    if (sig.destructive && !has_confirmation) {
      throw Error(ErrorCode::kInvalidArgument,
                  "destructive API '" + sig.name + "' lacks a confirmation argument");
    }
    if (sig.kind == ActionKind::kApi) {
      const auto& kb = sig.kb;
      if (!kb.value_argument.empty() && sig.find_argument(kb.value_argument) == nullptr) {
        dangling("kb value argument '" + kb.value_argument + "' of '" + sig.name + "'");
      }
      if (!kb.condition_argument.empty() && sig.find_argument(kb.condition_argument) == nullptr) {
        dangling("kb condition argument '" + kb.condition_argument + "' of '" + sig.name + "'");
      }
      if (!kb.entity_type.empty() && !types.count(kb.entity_type)) {
        dangling("kb entity type '" + kb.entity_type + "' of '" + sig.name + "'");
      }
      if (!kb.domain.empty() && !s.domains.empty() &&
          std::find(s.domains.begin(), s.domains.end(), kb.domain) == s.domains.end()) {
        dangling("kb domain '" + kb.domain + "' of '" + sig.name + "'");
      }
    }
  }
  for (const auto& g : s.goals) {
    for (const auto& api : g.apis) {
      if (s.find_signature(api) == nullptr) dangling("goal '" + g.name + "' names unknown API '" + api + "'");
    }
  }
  for (const auto& t : s.seeker_templates) {
    for (const auto& slot : t.slots()) {
      if (!types.count(slot)) dangling("template '" + t.id + "' uses undeclared slot '" + slot + "'");
    }
  }
  for (const auto& t : s.provider_templates) {
    const ActionSignature* sig = s.find_signature(t.act);
    if (sig == nullptr || sig->kind != ActionKind::kNlg) {
      dangling("provider template '" + t.id + "' names unknown NLG action '" + t.act + "'");
    }
  }
  for (const auto& d : s.seed_dialogues) {
    for (const auto& turn : d.turns) {
      for (const auto& a : turn.provider_actions) {
        if (s.find_signature(a.name) == nullptr) {
          throw Error(ErrorCode::kUnknownApi, "seed '" + d.id + "' uses unknown action '" + a.name + "'");
        }
      }
    }
  }
}

DomainSchema parse_schema(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kParse, "line " + std::to_string(line_of(text, e.byte)) + ": " + e.what());
  }
  DomainSchema s;
  try {
    s = schema_from_json(j);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("schema structure: ") + e.what());
  }
  validate_schema(s);
  return s;
}

DomainSchema load_schema(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kStorageIo, "cannot open schema '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_schema(buf.str());
}

std::string_view default_schema_text() { return kDefaultSchemaJson; }

const DomainSchema& default_schema() {
  static const DomainSchema schema = parse_schema(default_schema_text());
  return schema;
}

namespace {

json signature_to_json(const ActionSignature& sig) {
  json g;
  g["name"] = sig.name;
  g["kind"] = std::string(action_kind_name(sig.kind));
  json args = json::array();
  for (const auto& a : sig.arguments) {
    args.push_back({{"name", a.name}, {"type", a.type}, {"required", a.required}});
  }
  g["arguments"] = args;
  g["produces"] = sig.produces ? json(*sig.produces) : json(nullptr);
  g["result_name"] = sig.result_name;
  g["domain"] = sig.domain;
  g["destructive"] = sig.destructive;
  g["goal"] = sig.goal;
  g["kb"] = {{"op", std::string(kb_op_name(sig.kb.op))},
             {"domain", sig.kb.domain},
             {"entity_type", sig.kb.entity_type},
             {"value_argument", sig.kb.value_argument},
             {"condition_argument", sig.kb.condition_argument},
             {"polarity", std::string(polarity_name(sig.kb.polarity))}};
  return g;
}

json entity_types_to_json(const DomainSchema& s) {
  json arr = json::array();
  for (const auto& t : s.entity_types) {
    arr.push_back({{"name", t.name}, {"role", std::string(role_name(t.role))}, {"transferable", t.transferable}});
  }
  return arr;
}

}  // namespace

std::string schema_to_json(const DomainSchema& s) {
  json j;
  j["name"] = s.name;
  j["version"] = s.version;
  j["domains"] = s.domains;
  j["entity_types"] = entity_types_to_json(s);
  json cats = json::array();
  for (const auto& c : s.catalogs) {
    cats.push_back({{"entity_type", c.entity_type}, {"values", c.values}, {"extended_values", c.extended_values}});
  }
  j["catalogs"] = cats;
  json sigs = json::array();
  for (const auto& sig : s.signatures) sigs.push_back(signature_to_json(sig));
  j["signatures"] = sigs;
  json goals = json::array();
  for (const auto& g : s.goals) goals.push_back({{"name", g.name}, {"domain", g.domain}, {"apis", g.apis}});
  j["goals"] = goals;
  auto templates = [](const std::vector<Template>& ts) {
    json arr = json::array();
    for (const auto& t : ts) arr.push_back({{"id", t.id}, {"act", t.act}, {"text", t.text}});
    return arr;
  };
  j["seeker_templates"] = templates(s.seeker_templates);
  j["provider_templates"] = templates(s.provider_templates);
  json seeds = json::array();
  for (const auto& d : s.seed_dialogues) seeds.push_back(dialogue_to_json(d));
  j["seed_dialogues"] = seeds;
  return j.dump(1);
}

std::uint64_t structural_fingerprint(const DomainSchema& s) {
  json j;
  j["entity_types"] = entity_types_to_json(s);
  json sigs = json::array();
  for (const auto& sig : s.signatures) sigs.push_back(signature_to_json(sig));
  j["signatures"] = sigs;
  const std::string text = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace pref_teach
