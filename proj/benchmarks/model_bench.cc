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

#include <benchmark/benchmark.h>

#include <vector>

#include "pref_teach/manager.h"
#include "pref_teach/model.h"
#include "pref_teach/preference_kb.h"
#include "pref_teach/schema.h"
#include "pref_teach/simulator.h"
#include "pref_teach/tokenize.h"

namespace {

namespace pt = pref_teach;

const std::vector<pt::Dialogue>& corpus() {
  static const std::vector<pt::Dialogue> c = [] {
    const auto& s = pt::default_schema();
    pt::CorpusConfig config;
    config.n_dialogues = 50;
    config.threads = 1;
    return pt::generate_corpus(s, config, pt::estimate_transitions(s.seed_dialogues, {}, s));
  }();
  return c;
}

// Untrained weights cost the same to evaluate as trained ones.
pt::ModelBundle& bundle() {
  static pt::ModelBundle b = pt::ModelBundle::initialize(pt::default_schema(), corpus(), pt::ModelConfig{}, 1);
  return b;
}

void BM_EncodeTurn(benchmark::State& state) {
  const auto tokens = pt::tokenize("remember that i like the yankees when the weather is sunny");
  for (auto _ : state) benchmark::DoNotOptimize(bundle().encode_turn(tokens));
}
BENCHMARK(BM_EncodeTurn);

void BM_DialogueLossAndGradient(benchmark::State& state) {
  const auto& s = pt::default_schema();
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(bundle().dialogue_loss(corpus()[i++ % corpus().size()], s, true));
  }
}
BENCHMARK(BM_DialogueLossAndGradient)->Unit(benchmark::kMicrosecond);

void BM_AgentTurn(benchmark::State& state) {
  const auto& s = pt::default_schema();
  pt::PreferenceKb kb;
  pt::DialogueManager manager(s, kb);
  for (auto _ : state) {
    pt::SessionState session = manager.open_session("bench");
    benchmark::DoNotOptimize(manager.handle_utterance(session, "i love the yankees", bundle()));
  }
}
BENCHMARK(BM_AgentTurn)->Unit(benchmark::kMicrosecond);

}  // namespace
