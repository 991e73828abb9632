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

#include "pref_teach/random.h"
#include "pref_teach/schema.h"
#include "pref_teach/simulator.h"

namespace {

namespace pt = pref_teach;

const pt::TransitionMatrix& chain() {
  static const pt::TransitionMatrix tm =
      pt::estimate_transitions(pt::default_schema().seed_dialogues, pt::MixingRatio{}, pt::default_schema());
  return tm;
}

void BM_SampleGoal(benchmark::State& state) {
  pt::Rng rng(1);
  for (auto _ : state) benchmark::DoNotOptimize(pt::sample_goal(chain(), pt::default_schema(), rng));
}
BENCHMARK(BM_SampleGoal);

void BM_GenerateCorpus(benchmark::State& state) {
  pt::CorpusConfig config;
  config.n_dialogues = static_cast<int>(state.range(0));
  config.threads = 1;
  for (auto _ : state) {
    benchmark::DoNotOptimize(pt::generate_corpus(pt::default_schema(), config, chain()));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_GenerateCorpus)->Arg(100)->Unit(benchmark::kMillisecond);

}  // namespace
