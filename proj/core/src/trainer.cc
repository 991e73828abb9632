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

#include "pref_teach/trainer.h"

#include <chrono>
#include <numeric>

#include "pref_teach/error.h"

namespace pref_teach {

double mean_loss(ModelBundle& bundle, const std::vector<Dialogue>& corpus, const DomainSchema& schema) {
  if (corpus.empty()) return 0.0;
  double total = 0.0;
  for (const auto& d : corpus) total += bundle.dialogue_loss(d, schema, false).total();
  return total / static_cast<double>(corpus.size());
}

TrainResult train(const std::vector<Dialogue>& corpus, const DomainSchema& schema, const TrainConfig& config) {
  if (corpus.empty()) throw Error(ErrorCode::kInvalidArgument, "training corpus is empty");
  if (config.epochs < 0 || config.batch < 1 || !(config.lr > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "epochs must be >= 0, batch >= 1 and lr > 0");
  }
  const auto started = std::chrono::steady_clock::now();
  TrainResult result;
  result.bundle = ModelBundle::initialize(schema, corpus, config.model, stream_seed(config.seed, 0));
  ModelBundle& model = result.bundle;
  // Also validates every dialogue against the inventories before any update.
  result.loss_curve.push_back(mean_loss(model, corpus, schema));

  Adam adam(AdamConfig{config.lr});
  Rng order_rng(stream_seed(config.seed, 1));
  Rng dropout_rng(stream_seed(config.seed, 2));
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    order_rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch) {
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(config.batch));
      model.params().zero_grad();
      for (std::size_t k = begin; k < end; ++k) {
        epoch_loss += model.dialogue_loss(corpus[order[k]], schema, true, &dropout_rng, config.word_dropout).total();
      }
      const double scale = 1.0 / static_cast<double>(end - begin);
      for (auto& p : model.params().all()) p.grad *= scale;
      if (config.clip_norm > 0.0) model.params().clip_grad_norm(config.clip_norm);
      adam.step(model.params());
    }
    epoch_loss /= static_cast<double>(corpus.size());
    result.loss_curve.push_back(epoch_loss);
    if (config.on_epoch) config.on_epoch(epoch, epoch_loss);
  }

  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  model.training_record() = {{"epochs", config.epochs},
                             {"lr", config.lr},
                             {"batch", config.batch},
                             {"seed", config.seed},
                             {"word_dropout", config.word_dropout},
                             {"clip_norm", config.clip_norm},
                             {"n_dialogues", corpus.size()},
                             {"loss_curve", result.loss_curve},
                             {"seconds", seconds}};
  return result;
}

}  // namespace pref_teach
