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

#include <algorithm>
#include <functional>
#include <set>

#include "pref_teach/error.h"
#include "pref_teach/simulator.h"

namespace pref_teach {

std::map<std::string, std::vector<std::string>> seed_entity_values(const std::vector<Dialogue>& seeds) {
  std::map<std::string, std::set<std::string>> seen;
  for (const auto& d : seeds) {
    for (const auto& t : d.turns) {
      for (const auto& m : t.seeker_entities) seen[m.entity_type].insert(m.value);
    }
  }
  std::map<std::string, std::vector<std::string>> out;
  for (auto& [type, values] : seen) out[type] = {values.begin(), values.end()};
  return out;
}

namespace {

const ActionSignature* producer_of(const DomainSchema& schema, const std::string& type) {
  for (const auto& s : schema.signatures) {
    if (s.kind == ActionKind::kApi && s.produces && *s.produces == type) return &s;
  }
  return nullptr;
}

}  // namespace

EntityTransferGraph sample_goal(const TransitionMatrix& tm, const DomainSchema& schema, Rng& rng,
                                const GoalSamplerConfig& config) {
  if (tm.size() == 0) throw Error(ErrorCode::kInvalidArgument, "empty transition matrix");
  std::vector<std::string> sequence;
  std::size_t cur = rng.categorical(tm.start);
  sequence.push_back(tm.apis[cur]);
  while (static_cast<int>(sequence.size()) < std::max(1, config.max_apis)) {
    std::size_t next = rng.categorical(tm.rows[cur]);
    if (next == tm.stop_index()) break;
    sequence.push_back(tm.apis[next]);
    cur = next;
  }

  EntityTransferGraph g;
  std::function<int(const ActionSignature&)> add_api = [&](const ActionSignature& sig) -> int {
    // Result-typed arguments need a producer vertex first.
    std::vector<std::pair<std::string, int>> result_sources;
    for (const auto& arg : sig.arguments) {
      if (!arg.required || !schema.is_result_type(arg.type)) continue;
      int src = -1;
      for (int v = static_cast<int>(g.vertices.size()) - 1; v >= 0; --v) {
        const auto& gv = g.vertices[v];
        if (gv.kind != GoalVertex::Kind::kApiCall) continue;
        const ActionSignature* ps = schema.find_signature(gv.api);
        if (ps != nullptr && ps->produces && *ps->produces == arg.type) {
          src = v;
          break;
        }
      }
      if (src < 0) {
        const ActionSignature* producer = producer_of(schema, arg.type);
        if (producer == nullptr) throw Error(ErrorCode::kDanglingReference, "no API produces '" + arg.type + "'");
        src = add_api(*producer);
      }
      result_sources.emplace_back(arg.name, src);
    }

    const int api_vertex = static_cast<int>(g.vertices.size());
    GoalVertex av;
    av.kind = GoalVertex::Kind::kApiCall;
    av.api = sig.name;
    g.vertices.push_back(av);
    for (const auto& [name, src] : result_sources) g.edges.push_back({src, api_vertex, name});

    for (const auto& arg : sig.arguments) {
      if (!arg.required || schema.is_result_type(arg.type)) continue;
      const EntityTypeDef* et = schema.find_entity_type(arg.type);
      std::vector<int> compatible;
      if (et != nullptr && et->transferable) {
        for (int v = 0; v < api_vertex; ++v) {
          const auto& gv = g.vertices[v];
          if (gv.kind == GoalVertex::Kind::kSeekerEntity && gv.entity_type == arg.type) compatible.push_back(v);
        }
      }
      if (!compatible.empty() && rng.bernoulli(config.transfer_prob)) {
        g.edges.push_back({compatible[rng.index(compatible.size())], api_vertex, arg.name});
        continue;
      }
      const Catalog* cat = schema.find_catalog(arg.type);
      std::vector<std::string> pool;
      if (!rng.bernoulli(config.entity_resample_prob)) {
        auto it = config.seed_values.find(arg.type);
        if (it != config.seed_values.end()) pool = it->second;
      }
      if (pool.empty() && cat != nullptr) pool = cat->values;
      if (pool.empty()) {
        throw Error(ErrorCode::kNoCatalogValue, "entity type '" + arg.type + "' has an empty catalog");
      }
      GoalVertex ev;
      ev.kind = GoalVertex::Kind::kSeekerEntity;
      ev.entity_type = arg.type;
      ev.value = pool[rng.index(pool.size())];
      const int vid = static_cast<int>(g.vertices.size());
      g.vertices.push_back(std::move(ev));
      g.edges.push_back({vid, api_vertex, arg.name});
    }
    return api_vertex;
  };

  for (const auto& name : sequence) {
    const ActionSignature* sig = schema.find_signature(name);
    if (sig == nullptr) throw Error(ErrorCode::kUnknownApi, "transition matrix names unknown API '" + name + "'");
    add_api(*sig);
  }
  return g;
}

void validate_goal(const EntityTransferGraph& goal, const DomainSchema& schema) {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::kInvalidArgument, "invalid goal: " + what); };
  const int n = static_cast<int>(goal.vertices.size());
  std::vector<int> indegree(n, 0);
  std::vector<std::vector<int>> out(n);
  for (const auto& e : goal.edges) {
    if (e.from < 0 || e.from >= n || e.to < 0 || e.to >= n) fail("edge endpoint out of range");
    const auto& to = goal.vertices[e.to];
    if (to.kind != GoalVertex::Kind::kApiCall) fail("edge into a seeker entity vertex");
    const ActionSignature* sig = schema.find_signature(to.api);
    if (sig == nullptr) fail("unknown API '" + to.api + "'");
    const ArgumentSpec* arg = sig->find_argument(e.argument);
    if (arg == nullptr) fail("API '" + to.api + "' has no argument '" + e.argument + "'");
    const auto& from = goal.vertices[e.from];
    if (from.kind == GoalVertex::Kind::kSeekerEntity) {
      if (from.entity_type != arg->type) fail("entity type mismatch on '" + to.api + "." + e.argument + "'");
    } else {
      const ActionSignature* ps = schema.find_signature(from.api);
      if (ps == nullptr || !ps->produces || *ps->produces != arg->type) {
        fail("result type mismatch on '" + to.api + "." + e.argument + "'");
      }
    }
    ++indegree[e.to];
    out[e.from].push_back(e.to);
  }
  for (int v = 0; v < n; ++v) {
    const auto& gv = goal.vertices[v];
    if (gv.kind != GoalVertex::Kind::kApiCall) continue;
    const ActionSignature* sig = schema.find_signature(gv.api);
    if (sig == nullptr) fail("unknown API '" + gv.api + "'");
    for (const auto& arg : sig->arguments) {
      int incoming = 0;
      for (const auto& e : goal.edges) incoming += (e.to == v && e.argument == arg.name) ? 1 : 0;
      if (arg.required && incoming != 1) fail("argument '" + gv.api + "." + arg.name + "' has " +
                                              std::to_string(incoming) + " sources");
      if (!arg.required && incoming > 1) fail("argument '" + gv.api + "." + arg.name + "' has several sources");
    }
  }
  // Kahn's algorithm for acyclicity.
  std::vector<int> ready;
  std::vector<int> deg = indegree;
  for (int v = 0; v < n; ++v) {
    if (deg[v] == 0) ready.push_back(v);
  }
  int visited = 0;
  while (!ready.empty()) {
    int v = ready.back();
    ready.pop_back();
    ++visited;
    for (int w : out[v]) {
      if (--deg[w] == 0) ready.push_back(w);
    }
  }
  if (visited != n) fail("cycle detected");
}

}  // namespace pref_teach
