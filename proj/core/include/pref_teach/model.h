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

#ifndef PREF_TEACH_MODEL_H_
#define PREF_TEACH_MODEL_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "pref_teach/context.h"
#include "pref_teach/crf.h"
#include "pref_teach/nn.h"
#include "pref_teach/schema.h"

namespace pref_teach {

// How the context blocks pool their items. kMean averages every block
// uniformly. kRecency weights past actions by recency and the unconsumed
// current entities by utterance order, so the next pending request and the
// last action dominate their blocks.
enum class PoolingMode { kMean, kRecency };

std::string_view pooling_mode_name(PoolingMode mode);
std::optional<PoolingMode> parse_pooling_mode(std::string_view name);

struct ModelConfig {
  int d = 32;
  int ap_hidden = 128;
  int af_hidden = 32;
  int n_max = 3;
  bool catalog_features = true;
  AnchorMode anchor = AnchorMode::kFirstToken;
  PoolingMode pooling = PoolingMode::kRecency;
  // Previous turns pooled into E_pu.
  int past_window = 3;
  // Turns of actions pooled into E_pa before the current one; -1 = all.
  int action_window = -1;
  double action_decay = 0.8;
  double entity_decay = 0.5;
  double init_scale = 0.1;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

// Number of candidate flag features fed to argument filling.
inline constexpr int kAfFlags = 4;

struct TurnEncoding {
  std::vector<std::string> tokens;
  std::vector<int> ids;
  Mat input;   // (d + n_max * types) x length
  Mat states;  // d x length
  BiGruCache cache;
};

// c = [E_cu, E_pu, E_ce, E_pe, E_pa]; token_states is length x d.
struct ContextEmbedding {
  Vec c;
  Mat token_states;
};

// Pooling weights recorded by the forward pass for the backward pass.
struct ContextCache {
  struct TokenItem {
    int turn;
    int position;
    double weight;
  };
  struct EntityItem {
    int entity;
    double weight;
  };
  struct ActionItem {
    int key;
    double weight;
  };
  std::vector<TokenItem> current_tokens;
  std::vector<TokenItem> past_tokens;
  std::vector<EntityItem> current_entities;
  std::vector<EntityItem> past_entities;
  std::vector<ActionItem> actions;
};

struct ActionScore {
  std::string name;
  double probability = 0.0;
};

struct CandidateScore {
  int entity = -1;  // index into DialogueContext::entities
  double probability = 0.0;
  bool masked = false;
};

struct LossBreakdown {
  double ner = 0.0;
  double ap = 0.0;
  double af = 0.0;
  int turns = 0;
  int actions = 0;
  int arguments = 0;
  double total() const { return ner + ap + af; }
};

// Encoder, NER, AP and AF parameters together with every inventory needed
// to run them, the schema fingerprint and the training record.
class ModelBundle {
 public:
  static constexpr int kVersion = 1;
  static constexpr std::string_view kUnknownToken = "<unk>";

  ModelBundle() = default;
  ModelBundle(const ModelBundle& other);
  ModelBundle& operator=(const ModelBundle& other);
  ModelBundle(ModelBundle&& other) noexcept;
  ModelBundle& operator=(ModelBundle&& other) noexcept;

  // Vocabulary from the corpus; inventories, feature catalogs and the
  // fingerprint from the schema; parameters drawn from `seed`.
  static ModelBundle initialize(const DomainSchema& schema, const std::vector<Dialogue>& corpus,
                                const ModelConfig& config, std::uint64_t seed);

  nlohmann::json to_json() const;
  static ModelBundle from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static ModelBundle load(const std::filesystem::path& path);

  // Throws Error(kSchemaMismatch) unless the structural fingerprints agree.
  void check_schema(const DomainSchema& schema) const;
  // Replaces the catalogs used for n-gram features (same entity types).
  void use_catalogs(const DomainSchema& schema);

  const ModelConfig& config() const { return config_; }
  std::uint64_t fingerprint() const { return fingerprint_; }
  const std::vector<std::string>& vocabulary() const { return vocab_; }
  const std::vector<std::string>& actions() const { return actions_; }
  const std::vector<std::string>& entity_types() const { return tags_.types; }
  const TagSet& tags() const { return tags_; }
  const std::vector<Catalog>& catalogs() const { return catalogs_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  int action_index(std::string_view name) const;

  nlohmann::json& training_record() { return training_; }
  const nlohmann::json& training_record() const { return training_; }

  // ---- forward passes -------------------------------------------------
  // `dropout` replaces token ids by <unk> with probability word_dropout.
  TurnEncoding encode_turn(const std::vector<std::string>& tokens, Rng* dropout = nullptr,
                           double word_dropout = 0.0) const;
  ContextEmbedding encode_context(const DialogueContext& ctx, const std::vector<TurnEncoding>& turns,
                                  ContextCache* cache = nullptr) const;

  // Emission scores, length x tags.
  Mat ner_emissions(const TurnEncoding& turn) const;
  CrfScores crf_scores() const;
  std::vector<EntityMention> ner_decode(const TurnEncoding& turn) const;

  Vec ap_logits(const Vec& c) const;
  // Full distribution in inventory order.
  Vec ap_distribution(const Vec& c) const;
  // Sorted by probability (descending), ties by name; at most n_best items
  // with probability >= floor, and always at least the top item.
  std::vector<ActionScore> ap_rank(const Vec& c, int n_best, double floor = 0.01) const;

  // Probability for every context entity; masked (type-violating)
  // candidates get exactly 0.
  std::vector<CandidateScore> af_scores(const DialogueContext& ctx, const std::vector<TurnEncoding>& turns,
                                        const Vec& c, const std::string& action, const ArgumentSpec& arg) const;

  // ---- training ---------------------------------------------------------
  // Teacher-forced loss over one annotated dialogue. With `accumulate`,
  // adds the gradient of the total loss into params().
  LossBreakdown dialogue_loss(const Dialogue& dialogue, const DomainSchema& schema, bool accumulate,
                              Rng* dropout = nullptr, double word_dropout = 0.0);

 private:
  int token_id(const std::string& token) const;
  int key_id(const std::string& key) const;
  int type_id(const std::string& type) const;
  int arg_id(const std::string& name) const;
  void bind_params();
  void rebuild_indexes();

  struct AfCandidate {
    int entity = -1;
    bool legal = false;
    Vec u;
    Vec a;
    double s = 0.0;
    double p = 0.0;
  };

  void create_params(Rng& rng, bool random_init);
  std::vector<AfCandidate> af_forward(const DialogueContext& ctx, const std::vector<TurnEncoding>& turns,
                                      const Vec& c, const std::string& action, const ArgumentSpec& arg) const;
  void context_backward(const DialogueContext& ctx, const std::vector<TurnEncoding>& turns,
                        const ContextCache& cache, const Vec& dc, std::vector<Mat>& dstates);
  void span_backward(const ContextEntity& e, const std::vector<TurnEncoding>& turns, const Vec& dpool,
                     std::vector<Mat>& dstates) const;
  Vec entity_item(const ContextEntity& e, const std::vector<TurnEncoding>& turns) const;
  Vec span_pool(const ContextEntity& e, const std::vector<TurnEncoding>& turns) const;
  Vec af_flags(const DialogueContext& ctx, int entity) const;
  Vec af_query(const std::string& action, const ArgumentSpec& arg) const;

  ModelConfig config_;
  std::uint64_t fingerprint_ = 0;
  std::vector<std::string> vocab_;
  std::vector<std::string> actions_;
  std::vector<std::string> action_keys_;
  std::vector<std::string> arg_names_;
  TagSet tags_;
  std::vector<Catalog> catalogs_;
  nlohmann::json training_ = nlohmann::json::object();
  ParamStore params_;

  std::unordered_map<std::string, int> vocab_index_;
  std::unordered_map<std::string, int> key_index_;
  std::unordered_map<std::string, int> action_index_;
  std::unordered_map<std::string, int> arg_index_;
  TransitionMask mask_;

  struct Bound {
    Param* tok = nullptr;
    Param* type = nullptr;
    Param* act = nullptr;
    Param* arg = nullptr;
    Gru fwd;
    Gru bwd;
    Param* ner_w = nullptr;
    Param* ner_b = nullptr;
    Param* crf_trans = nullptr;
    Param* crf_start = nullptr;
    Param* crf_end = nullptr;
    Param* ap_w1 = nullptr;
    Param* ap_b1 = nullptr;
    Param* ap_w2 = nullptr;
    Param* ap_b2 = nullptr;
    Param* af_wc = nullptr;
    Param* af_wx = nullptr;
    Param* af_b = nullptr;
    Param* af_v = nullptr;
    Param* af_b0 = nullptr;
  } p_;
};

}  // namespace pref_teach

#endif  // PREF_TEACH_MODEL_H_
