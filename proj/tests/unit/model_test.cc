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

#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <unistd.h>

#include "oracles.h"
#include "pref_teach/context.h"
#include "pref_teach/error.h"
#include "pref_teach/model.h"
#include "pref_teach/predictor.h"
#include "pref_teach/simulator.h"
#include "pref_teach/tokenize.h"
#include "pref_teach/trainer.h"

namespace pt = pref_teach;

namespace {

std::vector<pt::Dialogue> sim(int n, std::uint64_t seed) {
  const auto& s = pt::default_schema();
  pt::CorpusConfig cc;
  cc.n_dialogues = n;
  cc.seed = seed;
  const auto tm = pt::estimate_transitions(s.seed_dialogues, cc.variation.mixing, s);
  return pt::generate_corpus(s, cc, tm);
}

// A multi-turn dialogue so that past-utterance, past-entity and
// past-action blocks all carry gradient.
const pt::Dialogue& multi_turn(const std::vector<pt::Dialogue>& corpus) {
  for (const auto& d : corpus) {
    if (d.turns.size() >= 2 && d.turns[0].seeker_entities.size() >= 2) return d;
  }
  return corpus.front();
}

std::vector<pt::TurnEncoding> encode_all(const pt::ModelBundle& b, const pt::DialogueContext& ctx) {
  std::vector<pt::TurnEncoding> out;
  for (const auto& u : ctx.utterances) out.push_back(b.encode_turn(u));
  return out;
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("analytic gradients match central differences across all heads") {
  const auto& s = pt::default_schema();
  const auto corpus = sim(40, 2);
  auto bundle = pt::testing::tiny_bundle(s, corpus, 5);
  const auto r = pt::testing::gradient_check(bundle, multi_turn(corpus), s, 3, 1);
  std::string fails;
  for (const auto& f : r.failures) fails += f + "\n";
  INFO(fails);
  CHECK(r.failed == 0);
  for (const char* g : {"emb", "enc", "ner", "crf", "ap", "af"}) CHECK(r.per_group.count(g) == 1);
}

TEST_CASE("gradients also hold with mean pooling and without catalog features") {
  const auto& s = pt::default_schema();
  const auto corpus = sim(30, 4);
  pt::ModelConfig cfg;
  cfg.d = 8;
  cfg.ap_hidden = 8;
  cfg.af_hidden = 5;
  cfg.init_scale = 0.5;
  cfg.pooling = pt::PoolingMode::kMean;
  cfg.catalog_features = false;
  auto bundle = pt::ModelBundle::initialize(s, corpus, cfg, 9);
  const auto r = pt::testing::gradient_check(bundle, multi_turn(corpus), s, 2, 3);
  CHECK(r.failed == 0);
}

TEST_CASE("action ranking is sorted, bounded and never empty") {
  const auto& s = pt::default_schema();
  const auto corpus = sim(20, 6);
  const auto bundle = pt::testing::tiny_bundle(s, corpus, 1);
  pt::Rng rng(2);
  for (int k = 0; k < 50; ++k) {
    pt::Vec c(bundle.config().d * 5);
    for (int i = 0; i < c.size(); ++i) c(i) = 3.0 * rng.normal();
    const pt::Vec dist = bundle.ap_distribution(c);
    CHECK(dist.sum() == doctest::Approx(1.0));
    CHECK(dist.size() == static_cast<int>(bundle.actions().size()));
    const int n_best = 1 + static_cast<int>(rng.index(6));
    const auto ranked = bundle.ap_rank(c, n_best, 0.05);
    REQUIRE(!ranked.empty());
    CHECK(static_cast<int>(ranked.size()) <= n_best);
    CHECK(ranked.front().probability == doctest::Approx(dist.maxCoeff()));
    for (std::size_t i = 1; i < ranked.size(); ++i) {
      CHECK(ranked[i].probability >= 0.05);
      CHECK((ranked[i - 1].probability > ranked[i].probability ||
             (ranked[i - 1].probability == ranked[i].probability && ranked[i - 1].name < ranked[i].name)));
    }
    CHECK(bundle.ap_rank(c, 3, 1.1).size() == 1);
  }
}

TEST_CASE("argument filling masks type-violating candidates") {
  const auto& s = pt::default_schema();
  const auto corpus = sim(20, 6);
  const auto bundle = pt::testing::tiny_bundle(s, corpus, 1);
  pt::ContextStore store;
  const auto tokens = pt::tokenize("i like the giants and new york");
  store.begin_turn(tokens, {{3, 4, "sport_team", "giants"}, {5, 7, "cuisine", "new york"}});
  const auto& ctx = store.context();
  const auto turns = encode_all(bundle, ctx);
  const auto emb = bundle.encode_context(ctx, turns);
  const auto* sig = s.find_signature("setSportAffinity");
  const auto scores = bundle.af_scores(ctx, turns, emb.c, "setSportAffinity", sig->arguments[0]);
  REQUIRE(scores.size() == 2);
  CHECK_FALSE(scores[0].masked);
  CHECK(scores[1].masked);
  CHECK(scores[1].probability == 0.0);
  CHECK(scores[0].probability > 0.0);

  pt::ModelPredictor predictor(bundle);
  predictor.recognize(tokens, 0);
  CHECK(predictor.fill_argument(ctx, "setSportAffinity", sig->arguments[0]) == 0);
  const auto* wsig = s.find_signature("setWeatherProviderAffinity");
  try {
    predictor.fill_argument(ctx, "setWeatherProviderAffinity", wsig->arguments[0]);
    FAIL("expected kNoLegalCandidate");
  } catch (const pt::Error& e) {
    CHECK(e.code() == pt::ErrorCode::kNoLegalCandidate);
  }
}

TEST_CASE("NER decoding yields well-formed spans") {
  const auto& s = pt::default_schema();
  const auto corpus = sim(20, 6);
  const auto bundle = pt::testing::tiny_bundle(s, corpus, 4);
  for (const auto& d : corpus) {
    for (const auto& t : d.turns) {
      const auto enc = bundle.encode_turn(t.seeker_utterance.tokens);
      CHECK(enc.states.rows() == bundle.config().d);
      const auto ms = bundle.ner_decode(enc);
      for (std::size_t i = 0; i < ms.size(); ++i) {
        CHECK(ms[i].start < ms[i].end);
        CHECK(ms[i].end <= static_cast<int>(t.seeker_utterance.tokens.size()));
        if (i > 0) CHECK_FALSE(ms[i].overlaps(ms[i - 1]));
      }
    }
  }
}

TEST_CASE("bundles survive a save and load bit for bit") {
  const auto& s = pt::default_schema();
  const auto corpus = sim(30, 3);
  pt::TrainConfig tc;
  tc.epochs = 1;
  tc.model.d = 8;
  const auto trained = pt::train(corpus, s, tc);
  const auto path = std::filesystem::temp_directory_path() / ("pt-bundle-" + std::to_string(::getpid()) + ".json");
  trained.bundle.save(path);
  const auto loaded = pt::ModelBundle::load(path);
  std::filesystem::remove(path);
  CHECK(loaded.fingerprint() == trained.bundle.fingerprint());
  CHECK(loaded.vocabulary() == trained.bundle.vocabulary());
  CHECK(loaded.actions() == trained.bundle.actions());
  CHECK(loaded.config().to_json() == trained.bundle.config().to_json());
  CHECK(loaded.training_record()["loss_curve"].size() == 2);
  for (const auto& p : trained.bundle.params().all()) CHECK(loaded.params().get(p.name).value == p.value);

  const auto& d = corpus.front();
  pt::ContextStore store;
  store.begin_turn(d.turns[0].seeker_utterance.tokens, d.turns[0].seeker_entities);
  const auto a = encode_all(trained.bundle, store.context());
  const auto b = encode_all(loaded, store.context());
  CHECK(trained.bundle.encode_context(store.context(), a).c == loaded.encode_context(store.context(), b).c);
  CHECK(trained.bundle.ner_decode(a[0]) == loaded.ner_decode(b[0]));
}

TEST_CASE("copies keep working after the original is gone") {
  const auto& s = pt::default_schema();
  const auto corpus = sim(10, 3);
  auto* original = new pt::ModelBundle(pt::testing::tiny_bundle(s, corpus, 8));
  const auto enc_before = original->encode_turn({"i", "love", "thai"});
  pt::ModelBundle copy = *original;
  delete original;
  CHECK(copy.encode_turn({"i", "love", "thai"}).states == enc_before.states);
}

TEST_CASE("a bundle refuses a structurally different schema") {
  const auto& s = pt::default_schema();
  const auto bundle = pt::testing::tiny_bundle(s, sim(5, 1), 1);
  CHECK_NOTHROW(bundle.check_schema(s));
  auto other = s;
  other.signatures[0].arguments[0].name = "club";
  try {
    bundle.check_schema(other);
    FAIL("expected kSchemaMismatch");
  } catch (const pt::Error& e) {
    CHECK(e.code() == pt::ErrorCode::kSchemaMismatch);
  }
}

TEST_CASE("training lowers the loss and is deterministic") {
  const auto& s = pt::default_schema();
  const auto corpus = sim(60, 12);
  pt::TrainConfig tc;
  tc.epochs = 4;
  tc.lr = 5e-3;
  tc.model.d = 16;
  const auto a = pt::train(corpus, s, tc);
  REQUIRE(a.loss_curve.size() == 5);
  CHECK(a.loss_curve.back() < 0.6 * a.loss_curve.front());
  const auto b = pt::train(corpus, s, tc);
  CHECK(a.loss_curve == b.loss_curve);
  auto copy = a.bundle;
  CHECK(pt::mean_loss(copy, corpus, s) < a.loss_curve.front());
}

TEST_CASE("five epochs on 2000 dialogues give a mostly non-increasing loss curve") {
  const auto& s = pt::default_schema();
  const auto corpus = sim(2000, 21);
  pt::TrainConfig tc;
  tc.epochs = 5;
  const auto r = pt::train(corpus, s, tc);
  REQUIRE(r.loss_curve.size() == 6);
  int steps_down = 0;
  std::string losses;
  for (std::size_t k = 1; k < r.loss_curve.size(); ++k) steps_down += r.loss_curve[k] <= r.loss_curve[k - 1];
  for (double l : r.loss_curve) losses += std::to_string(l) + " ";
  INFO("losses: " << losses);
  CHECK(steps_down >= 4);
}

TEST_CASE("model config JSON round trip") {
  pt::ModelConfig c;
  c.d = 12;
  c.catalog_features = false;
  c.pooling = pt::PoolingMode::kMean;
  c.anchor = pt::AnchorMode::kPerToken;
  c.action_window = 2;
  const auto back = pt::ModelConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
  CHECK(pt::parse_pooling_mode("recency") == pt::PoolingMode::kRecency);
  CHECK_FALSE(pt::parse_pooling_mode("max").has_value());
}

}  // TEST_SUITE
