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
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <set>
#include <thread>

#include "pref_teach/error.h"
#include "pref_teach/simulator.h"

namespace pref_teach {

CorpusStats corpus_stats(const std::vector<Dialogue>& corpus) {
  CorpusStats s;
  std::set<std::string> apis;
  s.n_dialogues = static_cast<int>(corpus.size());
  for (const auto& d : corpus) {
    s.n_turns += static_cast<long>(d.turns.size());
    for (const auto& t : d.turns) {
      s.n_actions += static_cast<long>(t.provider_actions.size());
      for (const auto& a : t.provider_actions) {
        if (a.kind == ActionKind::kApi) apis.insert(a.name);
      }
    }
  }
  s.n_apis = static_cast<int>(apis.size());
  return s;
}

std::string format_stats_table(const std::vector<std::pair<std::string, CorpusStats>>& rows) {
  std::string out;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-16s %6s %11s %10s %9s\n", "dataset", "#API", "#dialogues", "#actions", "#turns");
  out += buf;
  for (const auto& [name, s] : rows) {
    std::snprintf(buf, sizeof(buf), "%-16s %6d %11d %10ld %9ld\n", name.c_str(), s.n_apis, s.n_dialogues,
                  s.n_actions, s.n_turns);
    out += buf;
  }
  return out;
}

std::vector<Dialogue> generate_corpus(const DomainSchema& schema, const CorpusConfig& config,
                                      const TransitionMatrix& tm) {
  if (config.n_dialogues < 1) throw Error(ErrorCode::kInvalidArgument, "n_dialogues must be at least 1");
  config.variation.validate();
  tm.validate();

  GoalSamplerConfig goal_config;
  goal_config.transfer_prob = config.variation.transfer_prob;
  goal_config.max_apis = config.variation.max_apis;
  goal_config.entity_resample_prob = config.variation.entity_resample_prob;
  goal_config.seed_values = seed_entity_values(schema.seed_dialogues);

  const std::size_t n = static_cast<std::size_t>(config.n_dialogues);
  std::vector<Dialogue> out(n);
  auto make = [&](std::size_t k) {
    const std::uint64_t s = stream_seed(config.seed, k);
    Rng rng(s);
    EntityTransferGraph goal = sample_goal(tm, schema, rng, goal_config);
    Dialogue d = run_interaction(goal, config.seeker, config.provider, schema, config.variation, rng);
    d.id = config.id_prefix + "-" + std::to_string(k);
    d.metadata.seed = s;
    out[k] = std::move(d);
  };

  unsigned threads = config.threads > 0 ? static_cast<unsigned>(config.threads) : std::thread::hardware_concurrency();
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(n)));
  if (threads == 1) {
    for (std::size_t k = 0; k < n; ++k) make(k);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t k = next++; k < n; k = next++) {
        try {
          make(k);
        } catch (...) {
          std::lock_guard lock(failure_mu);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
  return out;
}

std::pair<DomainSchema, DomainSchema> split_out_of_sample(const DomainSchema& schema, const SplitConfig& config) {
  if (!(config.template_fraction > 0.0 && config.template_fraction < 1.0) ||
      !(config.catalog_fraction > 0.0 && config.catalog_fraction < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "held-out fractions must lie strictly between 0 and 1");
  }
  Rng rng(config.seed);
  DomainSchema train = schema;
  DomainSchema eval = schema;
  train.seeker_templates.clear();
  eval.seeker_templates.clear();

  std::map<std::pair<std::string, std::vector<std::string>>, std::vector<const Template*>> groups;
  for (const auto& t : schema.seeker_templates) {
    auto slots = t.slots();
    std::sort(slots.begin(), slots.end());
    groups[{t.act, slots}].push_back(&t);
  }
  for (auto& [key, members] : groups) {
    const std::size_t n = members.size();
    if (n < 2) {
      throw Error(ErrorCode::kInsufficientTemplates,
                  "act '" + key.first + "' has " + std::to_string(n) + " template(s) for its slot set; need 2");
    }
    std::size_t k = static_cast<std::size_t>(std::lround(static_cast<double>(n) * config.template_fraction));
    k = std::clamp<std::size_t>(k, 1, n - 1);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    rng.shuffle(order);
    std::vector<bool> held(n, false);
    for (std::size_t i = 0; i < k; ++i) held[order[i]] = true;
    for (std::size_t i = 0; i < n; ++i) (held[i] ? eval : train).seeker_templates.push_back(*members[i]);
  }
  // Keep the original bank order within each schema.
  auto by_position = [&](const Template& a, const Template& b) {
    auto pos = [&](const Template& t) {
      for (std::size_t i = 0; i < schema.seeker_templates.size(); ++i) {
        if (schema.seeker_templates[i].id == t.id) return i;
      }
      return schema.seeker_templates.size();
    };
    return pos(a) < pos(b);
  };
  std::stable_sort(train.seeker_templates.begin(), train.seeker_templates.end(), by_position);
  std::stable_sort(eval.seeker_templates.begin(), eval.seeker_templates.end(), by_position);

  for (std::size_t c = 0; c < schema.catalogs.size(); ++c) {
    const Catalog& cat = schema.catalogs[c];
    const EntityTypeDef* et = schema.find_entity_type(cat.entity_type);
    if (et == nullptr || et->role != EntityRole::kSlot) continue;
    const std::size_t n = cat.values.size();
    if (n < 2) continue;
    std::size_t k = static_cast<std::size_t>(std::lround(static_cast<double>(n) * config.catalog_fraction));
    k = std::clamp<std::size_t>(k, 1, n - 1);
    std::vector<std::string> values = cat.values;
    rng.shuffle(values);
    std::vector<std::string> held(values.begin(), values.begin() + static_cast<long>(k));
    std::vector<std::string> kept(values.begin() + static_cast<long>(k), values.end());
    std::sort(held.begin(), held.end());
    std::sort(kept.begin(), kept.end());
    train.catalogs[c].values = kept;
    train.catalogs[c].extended_values.clear();
    eval.catalogs[c].values = held;
    eval.catalogs[c].values.insert(eval.catalogs[c].values.end(), cat.extended_values.begin(),
                                   cat.extended_values.end());
    eval.catalogs[c].extended_values.clear();
  }
  return {std::move(train), std::move(eval)};
}

}  // namespace pref_teach
