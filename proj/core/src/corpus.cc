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

#include "pref_teach/corpus.h"

#include <fstream>
#include <map>
#include <set>

#include "pref_teach/error.h"
#include "pref_teach/schema.h"
#include "pref_teach/tokenize.h"

namespace pref_teach {

using nlohmann::json;

namespace {

std::string_view source_name(BindingSource s) {
  switch (s) {
    case BindingSource::kSeekerEntity: return "entity";
    case BindingSource::kApiResult: return "result";
    case BindingSource::kConstant: return "constant";
  }
  return "constant";
}

json binding_to_json(const ArgumentBinding& b) {
  json j;
  j["source"] = std::string(source_name(b.source));
  switch (b.source) {
    case BindingSource::kSeekerEntity:
      j["turn"] = b.turn;
      j["start"] = b.start;
      j["end"] = b.end;
      j["value"] = b.value;
      break;
    case BindingSource::kApiResult:
      j["ref"] = b.result_ref;
      break;
    case BindingSource::kConstant:
      j["literal"] = b.literal;
      break;
  }
  return j;
}

ArgumentBinding binding_from_json(const json& j) {
  const std::string src = j.at("source").get<std::string>();
  if (src == "entity") {
    return ArgumentBinding::seeker_entity(j.at("turn").get<int>(), j.at("start").get<int>(),
                                          j.at("end").get<int>(), j.value("value", ""));
  }
  if (src == "result") return ArgumentBinding::api_result(j.at("ref").get<std::string>());
  if (src == "constant") return ArgumentBinding::constant(j.at("literal").get<std::string>());
  throw Error(ErrorCode::kParse, "unknown binding source '" + src + "'");
}

std::string binding_text(const ArgumentBinding& b) {
  switch (b.source) {
    case BindingSource::kSeekerEntity: return b.value;
    case BindingSource::kApiResult: return b.result_ref;
    case BindingSource::kConstant: return "'" + b.literal + "'";
  }
  return "";
}

}  // namespace

std::string format_action(const ActionRecord& action) {
  std::string out = action.name + "(";
  bool first = true;
  for (const auto& [name, binding] : action.args) {
    if (!first) out += ", ";
    first = false;
    out += name + "=" + binding_text(binding);
  }
  out += ")";
  if (action.result_ref) out += " -> " + *action.result_ref;
  if (action.empty_result) out += " [empty]";
  return out;
}

json goal_to_json(const EntityTransferGraph& goal) {
  json vertices = json::array();
  for (const auto& v : goal.vertices) {
    if (v.kind == GoalVertex::Kind::kApiCall) {
      vertices.push_back({{"kind", "api"}, {"name", v.api}});
    } else {
      vertices.push_back({{"kind", "entity"}, {"entity_type", v.entity_type}, {"value", v.value}});
    }
  }
  json edges = json::array();
  for (const auto& e : goal.edges) {
    edges.push_back({{"from", e.from}, {"to", e.to}, {"argument", e.argument}});
  }
  return {{"vertices", vertices}, {"edges", edges}};
}

EntityTransferGraph goal_from_json(const json& j) {
  EntityTransferGraph g;
  for (const auto& v : j.at("vertices")) {
    GoalVertex gv;
    if (v.at("kind").get<std::string>() == "api") {
      gv.kind = GoalVertex::Kind::kApiCall;
      gv.api = v.at("name").get<std::string>();
    } else {
      gv.kind = GoalVertex::Kind::kSeekerEntity;
      gv.entity_type = v.at("entity_type").get<std::string>();
      gv.value = v.at("value").get<std::string>();
    }
    g.vertices.push_back(std::move(gv));
  }
  for (const auto& e : j.at("edges")) {
    g.edges.push_back({e.at("from").get<int>(), e.at("to").get<int>(), e.at("argument").get<std::string>()});
  }
  return g;
}

json dialogue_to_json(const Dialogue& d) {
  json turns = json::array();
  for (const auto& t : d.turns) {
    json user;
    user["type"] = "User_intent";
    user["utterance"] = t.seeker_utterance.text;
    user["tokens"] = t.seeker_utterance.tokens;
    user["user_nlgs"] = t.user_nlgs;
    json ents = json::array();
    for (const auto& m : t.seeker_entities) {
      ents.push_back({{"start", m.start}, {"end", m.end}, {"type", m.entity_type}, {"value", m.value}});
    }
    user["entities"] = ents;
    if (t.partially_normalized_value) user["partially_normalized_value"] = *t.partially_normalized_value;
    if (t.fully_normalized_value) user["fully_normalized_value"] = *t.fully_normalized_value;

    json actions = json::array();
    for (const auto& a : t.provider_actions) {
      json aj;
      aj["type"] = std::string(action_kind_name(a.kind));
      aj["name"] = a.name;
      json args = json::object();
      for (const auto& [name, b] : a.args) args[name] = binding_to_json(b);
      aj["args"] = args;
      if (a.result_ref) aj["result"] = *a.result_ref;
      if (a.empty_result) aj["empty_result"] = true;
      aj["normalized_value"] = format_action(a);
      actions.push_back(std::move(aj));
    }
    turns.push_back({{"user", user}, {"actions", actions}});
  }
  json j;
  j["id"] = d.id;
  j["metadata"] = {{"seed", d.metadata.seed}, {"template_ids", d.metadata.template_ids}};
  j["goal"] = goal_to_json(d.goal);
  j["turns"] = turns;
  return j;
}

Dialogue dialogue_from_json(const json& j) {
  try {
    Dialogue d;
    d.id = j.at("id").get<std::string>();
    if (j.contains("metadata")) {
      d.metadata.seed = j.at("metadata").value("seed", std::uint64_t{0});
      if (j.at("metadata").contains("template_ids")) {
        d.metadata.template_ids = j.at("metadata").at("template_ids").get<std::vector<std::string>>();
      }
    }
    if (j.contains("goal")) d.goal = goal_from_json(j.at("goal"));
    for (const auto& tj : j.at("turns")) {
      Turn t;
      const auto& u = tj.at("user");
      t.seeker_utterance.text = u.at("utterance").get<std::string>();
      t.seeker_utterance.tokens = u.contains("tokens") ? u.at("tokens").get<std::vector<std::string>>()
                                                       : tokenize(t.seeker_utterance.text);
      t.seeker_utterance.speaker = Speaker::kSeeker;
      if (u.contains("user_nlgs")) t.user_nlgs = u.at("user_nlgs").get<std::vector<std::string>>();
      if (u.contains("entities")) {
        for (const auto& m : u.at("entities")) {
          t.seeker_entities.push_back({m.at("start").get<int>(), m.at("end").get<int>(),
                                       m.at("type").get<std::string>(), m.at("value").get<std::string>()});
        }
      }
      if (u.contains("partially_normalized_value")) {
        t.partially_normalized_value = u.at("partially_normalized_value").get<std::string>();
      }
      if (u.contains("fully_normalized_value")) {
        t.fully_normalized_value = u.at("fully_normalized_value").get<std::string>();
      }
      for (const auto& aj : tj.at("actions")) {
        ActionRecord a;
        auto kind = parse_action_kind(aj.at("type").get<std::string>());
        if (!kind) throw Error(ErrorCode::kParse, "unknown action type in dialogue '" + d.id + "'");
        a.kind = *kind;
        a.name = aj.at("name").get<std::string>();
        if (aj.contains("args")) {
          for (const auto& [name, bj] : aj.at("args").items()) a.args[name] = binding_from_json(bj);
        }
        if (aj.contains("result")) a.result_ref = aj.at("result").get<std::string>();
        a.empty_result = aj.value("empty_result", false);
        t.provider_actions.push_back(std::move(a));
      }
      d.turns.push_back(std::move(t));
    }
    return d;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("dialogue record: ") + e.what());
  }
}

std::string serialize_dialogue(const Dialogue& dialogue) { return dialogue_to_json(dialogue).dump(); }

Dialogue parse_dialogue(std::string_view line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kParse, std::string("corpus record: ") + e.what());
  }
  return dialogue_from_json(j);
}

void write_corpus(const std::filesystem::path& path, const std::vector<Dialogue>& dialogues) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kStorageIo, "cannot write corpus '" + path.string() + "'");
  for (const auto& d : dialogues) out << serialize_dialogue(d) << '\n';
  if (!out) throw Error(ErrorCode::kStorageIo, "write failed for '" + path.string() + "'");
}

std::vector<Dialogue> read_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kStorageIo, "cannot open corpus '" + path.string() + "'");
  std::vector<Dialogue> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(parse_dialogue(line));
    } catch (const Error& e) {
      throw Error(ErrorCode::kParse, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Markup

namespace {

std::string trim(std::string_view s) {
  std::size_t b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return "";
  std::size_t e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

struct MarkupUtterance {
  std::string text;
  std::vector<std::string> tokens;
  std::vector<EntityMention> mentions;
};

MarkupUtterance parse_markup_utterance(const std::string& src) {
  MarkupUtterance out;
  std::size_t pos = 0;
  while (pos < src.size()) {
    std::size_t open = src.find('[', pos);
    std::string plain = src.substr(pos, open == std::string::npos ? std::string::npos : open - pos);
    out.text += plain;
    for (auto& tok : tokenize(plain)) out.tokens.push_back(std::move(tok));
    if (open == std::string::npos) break;
    std::size_t close = src.find(']', open);
    if (close == std::string::npos) throw Error(ErrorCode::kParse, "unterminated mention in '" + src + "'");
    std::string body = src.substr(open + 1, close - open - 1);
    std::size_t bar = body.find('|');
    if (bar == std::string::npos) throw Error(ErrorCode::kParse, "mention without type in '" + src + "'");
    std::string surface = body.substr(0, bar);
    std::string rest = body.substr(bar + 1);
    std::string type = rest;
    std::string value;
    if (std::size_t bar2 = rest.find('|'); bar2 != std::string::npos) {
      type = rest.substr(0, bar2);
      value = normalize_text(rest.substr(bar2 + 1));
    }
    auto toks = tokenize(surface);
    if (toks.empty()) throw Error(ErrorCode::kParse, "empty mention in '" + src + "'");
    EntityMention m;
    m.start = static_cast<int>(out.tokens.size());
    m.end = m.start + static_cast<int>(toks.size());
    m.entity_type = trim(type);
    m.value = value.empty() ? join_tokens(toks) : value;
    out.text += surface;
    for (auto& tok : toks) out.tokens.push_back(std::move(tok));
    out.mentions.push_back(std::move(m));
    pos = close + 1;
  }
  return out;
}

struct ParsedAction {
  std::string name;
  std::vector<std::pair<std::string, std::string>> args;
  std::optional<std::string> result;
  bool empty = false;
};

ParsedAction parse_action_markup(const std::string& src) {
  ParsedAction a;
  std::size_t open = src.find('(');
  std::size_t close = src.rfind(')');
  if (open == std::string::npos || close == std::string::npos || close < open) {
    throw Error(ErrorCode::kParse, "malformed action '" + src + "'");
  }
  a.name = trim(std::string_view(src).substr(0, open));
  std::string inner = src.substr(open + 1, close - open - 1);
  std::size_t start = 0;
  while (start <= inner.size()) {
    std::size_t comma = inner.find(',', start);
    std::string part = trim(std::string_view(inner).substr(start, comma == std::string::npos ? std::string::npos : comma - start));
    if (!part.empty()) {
      std::size_t eq = part.find('=');
      if (eq == std::string::npos) throw Error(ErrorCode::kParse, "argument without value in '" + src + "'");
      a.args.emplace_back(trim(std::string_view(part).substr(0, eq)), trim(std::string_view(part).substr(eq + 1)));
    }
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  std::string tail = src.substr(close + 1);
  if (std::size_t e = tail.find("[empty]"); e != std::string::npos) {
    a.empty = true;
    tail.erase(e);
  }
  if (std::size_t arrow = tail.find("->"); arrow != std::string::npos) {
    a.result = trim(std::string_view(tail).substr(arrow + 2));
  }
  return a;
}

}  // namespace

Dialogue parse_markup_dialogue(const json& markup, const DomainSchema& schema) {
  Dialogue d;
  try {
    d.id = markup.at("id").get<std::string>();
    d.metadata.seed = markup.value("seed", std::uint64_t{0});

    struct MentionRef {
      int turn;
      int index;
      bool consumed = false;
    };
    std::vector<MentionRef> refs;
    std::set<std::string> handles;
    std::map<std::pair<std::string, std::string>, int> entity_vertex;
    std::map<std::string, int> result_vertex;

    for (const auto& tj : markup.at("turns")) {
      Turn t;
      const int turn_index = static_cast<int>(d.turns.size());
      MarkupUtterance mu = parse_markup_utterance(tj.at("user").get<std::string>());
      t.seeker_utterance.text = mu.text;
      t.seeker_utterance.tokens = mu.tokens;
      t.seeker_entities = mu.mentions;
      for (int i = 0; i < static_cast<int>(mu.mentions.size()); ++i) refs.push_back({turn_index, i});
      if (tj.contains("nlg")) t.user_nlgs = tj.at("nlg").get<std::vector<std::string>>();
      if (tj.contains("partially_normalized_value")) {
        t.partially_normalized_value = tj.at("partially_normalized_value").get<std::string>();
      }
      if (tj.contains("fully_normalized_value")) {
        t.fully_normalized_value = tj.at("fully_normalized_value").get<std::string>();
      }
      d.turns.push_back(t);

      for (const auto& aj : tj.at("actions")) {
        ParsedAction pa = parse_action_markup(aj.get<std::string>());
        const ActionSignature* sig = schema.find_signature(pa.name);
        if (sig == nullptr) {
          throw Error(ErrorCode::kUnknownApi, "markup dialogue '" + d.id + "' uses unknown action '" + pa.name + "'");
        }
        ActionRecord a;
        a.kind = sig->kind;
        a.name = pa.name;
        a.result_ref = pa.result;
        a.empty_result = pa.empty;
        std::vector<MentionRef*> to_consume;
        for (const auto& [arg, raw] : pa.args) {
          if (!raw.empty() && raw.front() == '$') {
            a.args[arg] = ArgumentBinding::api_result(raw.substr(1));
          } else if (raw.size() >= 2 && raw.front() == '\'' && raw.back() == '\'') {
            a.args[arg] = ArgumentBinding::constant(raw.substr(1, raw.size() - 2));
          } else if (handles.count(raw)) {
            a.args[arg] = ArgumentBinding::api_result(raw);
          } else {
            const std::string value = normalize_text(raw);
            MentionRef* pick = nullptr;
            for (auto& r : refs) {
              const auto& m = d.turns[r.turn].seeker_entities[r.index];
              if (m.value != value) continue;
              if (!r.consumed) {
                pick = &r;
                break;
              }
              pick = &r;  // fall back to the latest consumed mention
            }
            if (pick == nullptr) {
              throw Error(ErrorCode::kParse, "markup dialogue '" + d.id + "': no mention for '" + raw + "'");
            }
            const auto& m = d.turns[pick->turn].seeker_entities[pick->index];
            a.args[arg] = ArgumentBinding::seeker_entity(pick->turn, m.start, m.end, m.value);
            to_consume.push_back(pick);
          }
        }
        if (a.kind == ActionKind::kApi) {
          for (auto* r : to_consume) r->consumed = true;
          if (a.result_ref) handles.insert(*a.result_ref);
        }
        if (a.kind == ActionKind::kApi && sig->goal) {
          const int api_vertex = static_cast<int>(d.goal.vertices.size());
          GoalVertex av;
          av.kind = GoalVertex::Kind::kApiCall;
          av.api = a.name;
          d.goal.vertices.push_back(av);
          for (const auto& [arg, b] : a.args) {
            if (b.source == BindingSource::kSeekerEntity) {
              const auto& m = d.turns[b.turn].seeker_entities;
              std::string type;
              for (const auto& mm : m) {
                if (mm.start == b.start && mm.end == b.end) type = mm.entity_type;
              }
              const EntityTypeDef* et = schema.find_entity_type(type);
              const bool transferable = et != nullptr && et->transferable;
              auto key = std::make_pair(type, b.value);
              int vid;
              if (transferable && entity_vertex.count(key)) {
                vid = entity_vertex[key];
              } else {
                vid = static_cast<int>(d.goal.vertices.size());
                GoalVertex ev;
                ev.kind = GoalVertex::Kind::kSeekerEntity;
                ev.entity_type = type;
                ev.value = b.value;
                d.goal.vertices.push_back(ev);
                if (transferable) entity_vertex[key] = vid;
              }
              d.goal.edges.push_back({vid, api_vertex, arg});
            } else if (b.source == BindingSource::kApiResult && result_vertex.count(b.result_ref)) {
              d.goal.edges.push_back({result_vertex[b.result_ref], api_vertex, arg});
            }
          }
          if (a.result_ref) result_vertex[*a.result_ref] = api_vertex;
        }
        d.turns.back().provider_actions.push_back(std::move(a));
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("markup dialogue: ") + e.what());
  }
  return d;
}

}  // namespace pref_teach
