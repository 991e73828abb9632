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

#ifndef PREF_TEACH_TRAINER_H_
#define PREF_TEACH_TRAINER_H_

#include <cstdint>
#include <functional>
#include <vector>

#include "pref_teach/domain.h"
#include "pref_teach/model.h"
#include "pref_teach/schema.h"

namespace pref_teach {

struct TrainConfig {
  int epochs = 40;
  double lr = 1e-3;
  // Dialogues per optimizer step.
  int batch = 8;
  std::uint64_t seed = 1;
  double word_dropout = 0.05;
  double clip_norm = 5.0;
  ModelConfig model;
  // Called after every epoch with (epoch, mean loss per dialogue).
  std::function<void(int, double)> on_epoch;
};

struct TrainResult {
  ModelBundle bundle;
  // Entry 0 is the loss of the initialized model; entry k the mean training
  // loss over epoch k.
  std::vector<double> loss_curve;
};

// Joint training of encoder, NER, AP and AF with summed losses. The schema's
// catalogs become the bundle's feature catalogs. Deterministic given seed.
TrainResult train(const std::vector<Dialogue>& corpus, const DomainSchema& schema, const TrainConfig& config);

// Mean teacher-forced loss per dialogue, no gradient.
double mean_loss(ModelBundle& bundle, const std::vector<Dialogue>& corpus, const DomainSchema& schema);

}  // namespace pref_teach

#endif  // PREF_TEACH_TRAINER_H_
