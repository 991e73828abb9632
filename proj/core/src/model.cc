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

#include "pref_teach/model.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <tuple>

#include "pref_teach/error.h"

namespace pref_teach {
namespace {

constexpr std::string_view kFormat = "pref-teach-model";

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t parse_hex64(const std::string& s) {
  std::size_t used = 0;
  const unsigned long long v = std::stoull(s, &used, 16);
  if (used != s.size()) throw Error(ErrorCode::kParse, "bad fingerprint '" + s + "'");
  return v;
}

double glorot(int fan_in, int fan_out) { return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out)); }

// log(1 + exp(x)) without overflow.
double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

std::vector<double> decay_weights(int n, double decay, bool newest_first_heavy) {
  std::vector<double> w(n, 1.0);
  double total = 0.0;
  for (int k = 0; k < n; ++k) {
    const int age = newest_first_heavy ? n - 1 - k : k;
    w[k] = std::pow(decay, age);
    total += w[k];
  }
  for (double& x : w) x /= total;
  return w;
}

}  // namespace

std::string_view pooling_mode_name(PoolingMode mode) { return mode == PoolingMode::kMean ? "mean" : "recency"; }

std::optional<PoolingMode> parse_pooling_mode(std::string_view name) {
  if (name == "mean") return PoolingMode::kMean;
  if (name == "recency") return PoolingMode::kRecency;
  return std::nullopt;
}

nlohmann::json ModelConfig::to_json() const {
  return {{"d", d},
          {"ap_hidden", ap_hidden},
          {"af_hidden", af_hidden},
          {"n_max", n_max},
          {"catalog_features", catalog_features},
          {"anchor", anchor_mode_name(anchor)},
          {"pooling", pooling_mode_name(pooling)},
          {"past_window", past_window},
          {"action_window", action_window},
          {"action_decay", action_decay},
          {"entity_decay", entity_decay},
          {"init_scale", init_scale}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.d = j.value("d", c.d);
  c.ap_hidden = j.value("ap_hidden", c.ap_hidden);
  c.af_hidden = j.value("af_hidden", c.af_hidden);
  c.n_max = j.value("n_max", c.n_max);
  c.catalog_features = j.value("catalog_features", c.catalog_features);
  const auto anchor = parse_anchor_mode(j.value("anchor", std::string(anchor_mode_name(c.anchor))));
  const auto pooling = parse_pooling_mode(j.value("pooling", std::string(pooling_mode_name(c.pooling))));
  if (!anchor || !pooling) throw Error(ErrorCode::kParse, "bad anchor or pooling mode in model config");
  c.anchor = *anchor;
  c.pooling = *pooling;
  c.past_window = j.value("past_window", c.past_window);
  c.action_window = j.value("action_window", c.action_window);
  c.action_decay = j.value("action_decay", c.action_decay);
  c.entity_decay = j.value("entity_decay", c.entity_decay);
  c.init_scale = j.value("init_scale", c.init_scale);
  return c;
}

// ---- construction -------------------------------------------------------

ModelBundle::ModelBundle(const ModelBundle& other) { *this = other; }

ModelBundle& ModelBundle::operator=(const ModelBundle& other) {
  if (this == &other) return *this;
  config_ = other.config_;
  fingerprint_ = other.fingerprint_;
  vocab_ = other.vocab_;
  actions_ = other.actions_;
  action_keys_ = other.action_keys_;
  arg_names_ = other.arg_names_;
  tags_ = other.tags_;
  catalogs_ = other.catalogs_;
  training_ = other.training_;
  params_ = other.params_;
  rebuild_indexes();
  bind_params();
  return *this;
}

ModelBundle::ModelBundle(ModelBundle&& other) noexcept { *this = std::move(other); }

ModelBundle& ModelBundle::operator=(ModelBundle&& other) noexcept {
  if (this == &other) return *this;
  config_ = other.config_;
  fingerprint_ = other.fingerprint_;
  vocab_ = std::move(other.vocab_);
  actions_ = std::move(other.actions_);
  action_keys_ = std::move(other.action_keys_);
  arg_names_ = std::move(other.arg_names_);
  tags_ = std::move(other.tags_);
  catalogs_ = std::move(other.catalogs_);
  training_ = std::move(other.training_);
  params_ = std::move(other.params_);
  rebuild_indexes();
  if (!params_.all().empty()) bind_params();
  other.p_ = {};
  return *this;
}

ModelBundle ModelBundle::initialize(const DomainSchema& schema, const std::vector<Dialogue>& corpus,
                                    const ModelConfig& config, std::uint64_t seed) {
  if (config.d < 8 || config.d % 2 != 0) throw Error(ErrorCode::kInvalidArgument, "d must be even and >= 8");
  if (config.n_max < 1) throw Error(ErrorCode::kInvalidArgument, "n_max must be >= 1");
  if (config.ap_hidden < 1 || config.af_hidden < 1 || config.past_window < 0) {
    throw Error(ErrorCode::kInvalidArgument, "hidden sizes must be positive");
  }
  ModelBundle b;
  b.config_ = config;
  b.fingerprint_ = structural_fingerprint(schema);

  std::set<std::string> words;
  for (const auto& d : corpus) {
    for (const auto& t : d.turns) words.insert(t.seeker_utterance.tokens.begin(), t.seeker_utterance.tokens.end());
  }
  words.erase(std::string(kUnknownToken));
  b.vocab_.push_back(std::string(kUnknownToken));
  b.vocab_.insert(b.vocab_.end(), words.begin(), words.end());

  b.tags_ = TagSet::bio(schema.entity_type_names());
  std::set<std::string> args;
  for (const auto& sig : schema.signatures) {
    b.actions_.push_back(sig.name);
    for (const auto& a : sig.arguments) args.insert(a.name);
  }
  b.action_keys_ = b.actions_;
  for (const auto& sig : schema.signatures) {
    if (sig.kind == ActionKind::kApi) b.action_keys_.push_back(sig.name + "#empty");
  }
  b.arg_names_.assign(args.begin(), args.end());
  b.use_catalogs(schema);

  Rng rng(seed);
  b.create_params(rng, true);
  b.rebuild_indexes();
  b.bind_params();
  return b;
}

void ModelBundle::create_params(Rng& rng, bool random_init) {
  const int d = config_.d;
  const int types = static_cast<int>(tags_.types.size());
  const int n_tags = tags_.size();
  const int in = d + config_.n_max * types;
  const int cdim = 5 * d;
  const int udim = 5 * d + kAfFlags;
  const double emb = random_init ? config_.init_scale : 0.0;
  auto g = [&](int fan_in, int fan_out) { return random_init ? glorot(fan_in, fan_out) : 0.0; };
  params_ = ParamStore();
  params_.add("emb.token", d, static_cast<int>(vocab_.size()), emb, rng);
  params_.add("emb.type", d, std::max(types, 1), emb, rng);
  params_.add("emb.action", d, static_cast<int>(action_keys_.size()), emb, rng);
  params_.add("emb.arg", d, std::max(static_cast<int>(arg_names_.size()), 1), emb, rng);
  Gru::create(params_, "enc.fwd", in, d / 2, rng);
  Gru::create(params_, "enc.bwd", in, d / 2, rng);
  params_.add("ner.w", n_tags, d, g(d, n_tags), rng);
  params_.add("ner.b", n_tags, 1, 0.0, rng);
  params_.add("crf.trans", n_tags, n_tags, random_init ? 0.01 : 0.0, rng);
  params_.add("crf.start", n_tags, 1, 0.0, rng);
  params_.add("crf.end", n_tags, 1, 0.0, rng);
  params_.add("ap.w1", config_.ap_hidden, cdim, g(cdim, config_.ap_hidden), rng);
  params_.add("ap.b1", config_.ap_hidden, 1, 0.0, rng);
  params_.add("ap.w2", static_cast<int>(actions_.size()), config_.ap_hidden,
              g(config_.ap_hidden, static_cast<int>(actions_.size())), rng);
  params_.add("ap.b2", static_cast<int>(actions_.size()), 1, 0.0, rng);
  params_.add("af.wc", config_.af_hidden, cdim, g(cdim, config_.af_hidden), rng);
  params_.add("af.wx", config_.af_hidden, udim, g(udim, config_.af_hidden), rng);
  params_.add("af.b", config_.af_hidden, 1, 0.0, rng);
  params_.add("af.v", config_.af_hidden, 1, g(config_.af_hidden, 1), rng);
  params_.add("af.b0", 1, 1, 0.0, rng);
}

void ModelBundle::bind_params() {
  p_.tok = &params_.get("emb.token");
  p_.type = &params_.get("emb.type");
  p_.act = &params_.get("emb.action");
  p_.arg = &params_.get("emb.arg");
  p_.fwd = Gru::bind(params_, "enc.fwd");
  p_.bwd = Gru::bind(params_, "enc.bwd");
  p_.ner_w = &params_.get("ner.w");
  p_.ner_b = &params_.get("ner.b");
  p_.crf_trans = &params_.get("crf.trans");
  p_.crf_start = &params_.get("crf.start");
  p_.crf_end = &params_.get("crf.end");
  p_.ap_w1 = &params_.get("ap.w1");
  p_.ap_b1 = &params_.get("ap.b1");
  p_.ap_w2 = &params_.get("ap.w2");
  p_.ap_b2 = &params_.get("ap.b2");
  p_.af_wc = &params_.get("af.wc");
  p_.af_wx = &params_.get("af.wx");
  p_.af_b = &params_.get("af.b");
  p_.af_v = &params_.get("af.v");
  p_.af_b0 = &params_.get("af.b0");
}

void ModelBundle::rebuild_indexes() {
  vocab_index_.clear();
  key_index_.clear();
  action_index_.clear();
  arg_index_.clear();
  for (std::size_t i = 0; i < vocab_.size(); ++i) vocab_index_.emplace(vocab_[i], static_cast<int>(i));
  for (std::size_t i = 0; i < action_keys_.size(); ++i) key_index_.emplace(action_keys_[i], static_cast<int>(i));
  for (std::size_t i = 0; i < actions_.size(); ++i) action_index_.emplace(actions_[i], static_cast<int>(i));
  for (std::size_t i = 0; i < arg_names_.size(); ++i) arg_index_.emplace(arg_names_[i], static_cast<int>(i));
  mask_ = TransitionMask::bio(tags_);
}

void ModelBundle::use_catalogs(const DomainSchema& schema) {
  catalogs_.clear();
  for (const auto& type : tags_.types) {
    const Catalog* c = schema.find_catalog(type);
    Catalog cat;
    cat.entity_type = type;
    if (c != nullptr) cat = *c;
    catalogs_.push_back(std::move(cat));
  }
}

void ModelBundle::check_schema(const DomainSchema& schema) const {
  const std::uint64_t fp = structural_fingerprint(schema);
  if (fp != fingerprint_) {
    throw Error(ErrorCode::kSchemaMismatch,
                "model fingerprint " + hex64(fingerprint_) + " does not match schema fingerprint " + hex64(fp));
  }
}

int ModelBundle::action_index(std::string_view name) const {
  auto it = action_index_.find(std::string(name));
  return it == action_index_.end() ? -1 : it->second;
}

int ModelBundle::token_id(const std::string& token) const {
  auto it = vocab_index_.find(token);
  return it == vocab_index_.end() ? 0 : it->second;
}

int ModelBundle::key_id(const std::string& key) const {
  auto it = key_index_.find(key);
  if (it == key_index_.end()) throw Error(ErrorCode::kSchemaMismatch, "action '" + key + "' not in model inventory");
  return it->second;
}

int ModelBundle::type_id(const std::string& type) const {
  for (std::size_t i = 0; i < tags_.types.size(); ++i) {
    if (tags_.types[i] == type) return static_cast<int>(i);
  }
  throw Error(ErrorCode::kUnknownEntityType, "entity type '" + type + "' not in model inventory");
}

int ModelBundle::arg_id(const std::string& name) const {
  auto it = arg_index_.find(name);
  if (it == arg_index_.end()) throw Error(ErrorCode::kSchemaMismatch, "argument '" + name + "' not in model inventory");
  return it->second;
}

// ---- serialization --------------------------------------------------------

nlohmann::json ModelBundle::to_json() const {
  nlohmann::json cats = nlohmann::json::array();
  for (const auto& c : catalogs_) {
    cats.push_back({{"entity_type", c.entity_type}, {"values", c.values}, {"extended_values", c.extended_values}});
  }
  return {{"format", kFormat},
          {"version", kVersion},
          {"fingerprint", hex64(fingerprint_)},
          {"config", config_.to_json()},
          {"training", training_},
          {"vocab", vocab_},
          {"entity_types", tags_.types},
          {"actions", actions_},
          {"action_keys", action_keys_},
          {"arg_names", arg_names_},
          {"catalogs", cats},
          {"params", params_.to_json()}};
}

ModelBundle ModelBundle::from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != kFormat) throw Error(ErrorCode::kParse, "not a model bundle");
    const int version = j.at("version").get<int>();
    if (version != kVersion) {
      throw Error(ErrorCode::kParse, "unsupported bundle version " + std::to_string(version));
    }
    ModelBundle b;
    b.config_ = ModelConfig::from_json(j.at("config"));
    b.fingerprint_ = parse_hex64(j.at("fingerprint").get<std::string>());
    b.training_ = j.value("training", nlohmann::json::object());
    b.vocab_ = j.at("vocab").get<std::vector<std::string>>();
    b.tags_ = TagSet::bio(j.at("entity_types").get<std::vector<std::string>>());
    b.actions_ = j.at("actions").get<std::vector<std::string>>();
    b.action_keys_ = j.at("action_keys").get<std::vector<std::string>>();
    b.arg_names_ = j.at("arg_names").get<std::vector<std::string>>();
    for (const auto& c : j.at("catalogs")) {
      Catalog cat;
      cat.entity_type = c.at("entity_type").get<std::string>();
      cat.values = c.at("values").get<std::vector<std::string>>();
      cat.extended_values = c.value("extended_values", std::vector<std::string>{});
      b.catalogs_.push_back(std::move(cat));
    }
    if (b.vocab_.empty() || b.vocab_[0] != kUnknownToken) throw Error(ErrorCode::kParse, "vocabulary lacks <unk>");
    if (b.catalogs_.size() != b.tags_.types.size()) {
      throw Error(ErrorCode::kDimensionMismatch, "catalog count does not match entity types");
    }
    Rng rng(0);
    b.create_params(rng, false);
    b.params_.load_json(j.at("params"));
    b.rebuild_indexes();
    b.bind_params();
    return b;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("model bundle: ") + e.what());
  }
}

void ModelBundle::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kStorageIo, "cannot write " + path.string());
  out << to_json().dump() << '\n';
  if (!out) throw Error(ErrorCode::kStorageIo, "write failed for " + path.string());
}

ModelBundle ModelBundle::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kStorageIo, "cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(ss.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kParse, path.string() + ": " + e.what());
  }
  return from_json(j);
}

// ---- encoder ------------------------------------------------------------

TurnEncoding ModelBundle::encode_turn(const std::vector<std::string>& tokens, Rng* dropout,
                                      double word_dropout) const {
  const int d = config_.d;
  const int types = static_cast<int>(tags_.types.size());
  const int len = static_cast<int>(tokens.size());
  TurnEncoding enc;
  enc.tokens = tokens;
  enc.ids.resize(len);
  for (int t = 0; t < len; ++t) {
    enc.ids[t] = token_id(tokens[t]);
    if (dropout != nullptr && word_dropout > 0.0 && dropout->bernoulli(word_dropout)) enc.ids[t] = 0;
  }
  enc.input = Mat::Zero(d + config_.n_max * types, len);
  for (int t = 0; t < len; ++t) enc.input.col(t).head(d) = p_.tok->value.col(enc.ids[t]);
  if (config_.catalog_features && types > 0) {
    const CatalogFeatureMatrix f = catalog_features(tokens, catalogs_, config_.n_max, config_.anchor);
    for (int t = 0; t < len; ++t) {
      for (int n = 1; n <= config_.n_max; ++n) {
        for (int e = 0; e < types; ++e) enc.input(d + (n - 1) * types + e, t) = f.at(t, n, e);
      }
    }
  }
  if (len == 0) {
    enc.states = Mat::Zero(d, 0);
    return enc;
  }
  enc.states = bigru_forward(p_.fwd, p_.bwd, enc.input, &enc.cache);
  return enc;
}

Vec ModelBundle::span_pool(const ContextEntity& e, const std::vector<TurnEncoding>& turns) const {
  const Mat& s = turns[e.turn].states;
  const int start = std::clamp(e.mention.start, 0, static_cast<int>(s.cols()));
  const int end = std::clamp(e.mention.end, start, static_cast<int>(s.cols()));
  if (end == start) return Vec::Zero(config_.d);
  return s.middleCols(start, end - start).rowwise().mean();
}

void ModelBundle::span_backward(const ContextEntity& e, const std::vector<TurnEncoding>& turns, const Vec& dpool,
                                std::vector<Mat>& dstates) const {
  const int cols = static_cast<int>(turns[e.turn].states.cols());
  const int start = std::clamp(e.mention.start, 0, cols);
  const int end = std::clamp(e.mention.end, start, cols);
  if (end == start) return;
  const double w = 1.0 / (end - start);
  for (int t = start; t < end; ++t) dstates[e.turn].col(t) += w * dpool;
}

Vec ModelBundle::entity_item(const ContextEntity& e, const std::vector<TurnEncoding>& turns) const {
  return 0.5 * (p_.type->value.col(type_id(e.mention.entity_type)) + span_pool(e, turns));
}

ContextEmbedding ModelBundle::encode_context(const DialogueContext& ctx, const std::vector<TurnEncoding>& turns,
                                             ContextCache* cache) const {
  const int d = config_.d;
  const int cur = ctx.current_turn();
  if (cur < 0 || static_cast<int>(turns.size()) <= cur) {
    throw Error(ErrorCode::kDimensionMismatch, "context has no encoded current turn");
  }
  if (p_.tok == nullptr || p_.tok->value.rows() != d) {
    throw Error(ErrorCode::kDimensionMismatch, "encoder parameters do not match width d");
  }
  ContextCache local;
  ContextCache& cc = cache != nullptr ? *cache : local;
  cc = {};
  ContextEmbedding out;
  out.c = Vec::Zero(5 * d);

  // E_cu
  const int len = static_cast<int>(turns[cur].ids.size());
  for (int t = 0; t < len; ++t) cc.current_tokens.push_back({cur, t, 1.0 / len});
  // E_pu
  std::vector<int> past;
  for (int j = std::max(0, cur - config_.past_window); j < cur; ++j) {
    if (!turns[j].ids.empty()) past.push_back(j);
  }
  for (int j : past) {
    const int lj = static_cast<int>(turns[j].ids.size());
    for (int t = 0; t < lj; ++t) cc.past_tokens.push_back({j, t, 1.0 / (static_cast<double>(past.size()) * lj)});
  }
  for (const auto& it : cc.current_tokens) out.c.segment(0, d) += it.weight * p_.tok->value.col(turns[it.turn].ids[it.position]);
  for (const auto& it : cc.past_tokens) out.c.segment(d, d) += it.weight * p_.tok->value.col(turns[it.turn].ids[it.position]);

  // E_ce and E_pe
  std::vector<int> cur_ents;
  std::vector<int> past_ents;
  for (std::size_t i = 0; i < ctx.entities.size(); ++i) {
    const auto& e = ctx.entities[i];
    if (e.consumed) continue;
    (e.turn == cur ? cur_ents : past_ents).push_back(static_cast<int>(i));
  }
  std::stable_sort(cur_ents.begin(), cur_ents.end(), [&](int a, int b) {
    return ctx.entities[a].mention.start < ctx.entities[b].mention.start;
  });
  const int nce = static_cast<int>(cur_ents.size());
  const std::vector<double> wce = config_.pooling == PoolingMode::kRecency
                                      ? decay_weights(nce, config_.entity_decay, false)
                                      : std::vector<double>(nce, nce > 0 ? 1.0 / nce : 0.0);
  for (int k = 0; k < nce; ++k) {
    cc.current_entities.push_back({cur_ents[k], wce[k]});
    out.c.segment(2 * d, d) += wce[k] * entity_item(ctx.entities[cur_ents[k]], turns);
  }
  std::stable_sort(past_ents.begin(), past_ents.end(), [&](int a, int b) {
    const auto& ea = ctx.entities[a];
    const auto& eb = ctx.entities[b];
    return std::tie(ea.turn, ea.mention.start) < std::tie(eb.turn, eb.mention.start);
  });
  const int npe = static_cast<int>(past_ents.size());
  const std::vector<double> wpe = config_.pooling == PoolingMode::kRecency
                                      ? decay_weights(npe, config_.entity_decay, false)
                                      : std::vector<double>(npe, npe > 0 ? 1.0 / npe : 0.0);
  for (int k = 0; k < npe; ++k) {
    cc.past_entities.push_back({past_ents[k], wpe[k]});
    out.c.segment(3 * d, d) += wpe[k] * entity_item(ctx.entities[past_ents[k]], turns);
  }

  // E_pa
  std::vector<int> keys;
  for (const auto& a : ctx.actions) {
    if (config_.action_window < 0 || a.turn >= cur - config_.action_window) keys.push_back(key_id(a.key));
  }
  const int na = static_cast<int>(keys.size());
  const std::vector<double> wa = config_.pooling == PoolingMode::kRecency
                                     ? decay_weights(na, config_.action_decay, true)
                                     : std::vector<double>(na, na > 0 ? 1.0 / na : 0.0);
  for (int k = 0; k < na; ++k) {
    cc.actions.push_back({keys[k], wa[k]});
    out.c.segment(4 * d, d) += wa[k] * p_.act->value.col(keys[k]);
  }
  out.token_states = turns[cur].states.transpose();
  return out;
}

void ModelBundle::context_backward(const DialogueContext& ctx, const std::vector<TurnEncoding>& turns,
                                   const ContextCache& cache, const Vec& dc, std::vector<Mat>& dstates) {
  const int d = config_.d;
  for (const auto& it : cache.current_tokens) {
    p_.tok->grad.col(turns[it.turn].ids[it.position]) += it.weight * dc.segment(0, d);
  }
  for (const auto& it : cache.past_tokens) {
    p_.tok->grad.col(turns[it.turn].ids[it.position]) += it.weight * dc.segment(d, d);
  }
  auto entity_back = [&](const ContextCache::EntityItem& it, int block) {
    const ContextEntity& e = ctx.entities[it.entity];
    const Vec ditem = 0.5 * it.weight * dc.segment(block * d, d);
    p_.type->grad.col(type_id(e.mention.entity_type)) += ditem;
    span_backward(e, turns, ditem, dstates);
  };
  for (const auto& it : cache.current_entities) entity_back(it, 2);
  for (const auto& it : cache.past_entities) entity_back(it, 3);
  for (const auto& it : cache.actions) p_.act->grad.col(it.key) += it.weight * dc.segment(4 * d, d);
}

// ---- NER ------------------------------------------------------------------

Mat ModelBundle::ner_emissions(const TurnEncoding& turn) const {
  Mat e = p_.ner_w->value * turn.states;
  e.colwise() += p_.ner_b->value.col(0);
  return e.transpose();
}

CrfScores ModelBundle::crf_scores() const {
  CrfScores s;
  s.transitions = p_.crf_trans->value;
  s.start = p_.crf_start->value.col(0);
  s.end = p_.crf_end->value.col(0);
  s.mask = mask_;
  return s;
}

std::vector<EntityMention> ModelBundle::ner_decode(const TurnEncoding& turn) const {
  if (turn.tokens.empty()) return {};
  const std::vector<int> tags = crf_viterbi(ner_emissions(turn), crf_scores());
  return tags_to_mentions(tags, tags_, turn.tokens);
}

// ---- action prediction ------------------------------------------------------

Vec ModelBundle::ap_logits(const Vec& c) const {
  if (c.size() != 5 * config_.d) {
    throw Error(ErrorCode::kDimensionMismatch,
                "context length " + std::to_string(c.size()) + " != " + std::to_string(5 * config_.d));
  }
  const Vec h = (p_.ap_w1->value * c + p_.ap_b1->value.col(0)).cwiseMax(0.0);
  return p_.ap_w2->value * h + p_.ap_b2->value.col(0);
}

Vec ModelBundle::ap_distribution(const Vec& c) const { return softmax(ap_logits(c)); }

std::vector<ActionScore> ModelBundle::ap_rank(const Vec& c, int n_best, double floor) const {
  if (n_best < 1) throw Error(ErrorCode::kInvalidArgument, "n_best must be >= 1");
  const Vec p = ap_distribution(c);
  std::vector<int> order(actions_.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (p(a) != p(b)) return p(a) > p(b);
    return actions_[a] < actions_[b];
  });
  std::vector<ActionScore> out;
  for (int i : order) {
    if (static_cast<int>(out.size()) >= n_best) break;
    if (!out.empty() && p(i) < floor) break;
    out.push_back({actions_[i], p(i)});
  }
  return out;
}

// ---- argument filling --------------------------------------------------------

Vec ModelBundle::af_flags(const DialogueContext& ctx, int entity) const {
  const ContextEntity& e = ctx.entities[entity];
  const int cur = ctx.current_turn();
  // First unconsumed mention of this type, preferring the latest turn.
  int first = -1;
  for (std::size_t i = 0; i < ctx.entities.size(); ++i) {
    const auto& o = ctx.entities[i];
    if (o.consumed || o.mention.entity_type != e.mention.entity_type) continue;
    if (first < 0) {
      first = static_cast<int>(i);
      continue;
    }
    const auto& f = ctx.entities[first];
    if (o.turn > f.turn || (o.turn == f.turn && o.mention.start < f.mention.start)) first = static_cast<int>(i);
  }
  const double ago = std::max(0, cur - e.turn);
  Vec f(kAfFlags);
  f << (e.turn == cur ? 1.0 : 0.0), (e.consumed ? 1.0 : 0.0), (first == entity ? 1.0 : 0.0), ago / (1.0 + ago);
  return f;
}

Vec ModelBundle::af_query(const std::string& action, const ArgumentSpec& arg) const {
  const int d = config_.d;
  Vec q(3 * d);
  q << p_.arg->value.col(arg_id(arg.name)), p_.type->value.col(type_id(arg.type)), p_.act->value.col(key_id(action));
  return q;
}

std::vector<ModelBundle::AfCandidate> ModelBundle::af_forward(const DialogueContext& ctx,
                                                              const std::vector<TurnEncoding>& turns, const Vec& c,
                                                              const std::string& action,
                                                              const ArgumentSpec& arg) const {
  const int d = config_.d;
  if (c.size() != 5 * d) throw Error(ErrorCode::kDimensionMismatch, "context length mismatch in argument filling");
  std::vector<AfCandidate> out;
  bool any_legal = false;
  for (std::size_t i = 0; i < ctx.entities.size(); ++i) {
    AfCandidate cand;
    cand.entity = static_cast<int>(i);
    cand.legal = ctx.entities[i].mention.entity_type == arg.type;
    any_legal = any_legal || cand.legal;
    out.push_back(std::move(cand));
  }
  if (!any_legal) return out;
  const Vec q = af_query(action, arg);
  const Vec base = p_.af_wc->value * c + p_.af_b->value.col(0);
  for (auto& cand : out) {
    if (!cand.legal) continue;
    const ContextEntity& e = ctx.entities[cand.entity];
    cand.u.resize(5 * d + kAfFlags);
    cand.u << span_pool(e, turns), p_.type->value.col(type_id(e.mention.entity_type)), af_flags(ctx, cand.entity), q;
    cand.a = (base + p_.af_wx->value * cand.u).array().tanh().matrix();
    cand.s = p_.af_v->value.col(0).dot(cand.a) + p_.af_b0->value(0, 0);
    cand.p = sigmoid(cand.s);
  }
  return out;
}

std::vector<CandidateScore> ModelBundle::af_scores(const DialogueContext& ctx, const std::vector<TurnEncoding>& turns,
                                                   const Vec& c, const std::string& action,
                                                   const ArgumentSpec& arg) const {
  std::vector<CandidateScore> out;
  for (const auto& cand : af_forward(ctx, turns, c, action, arg)) {
    out.push_back({cand.entity, cand.legal ? cand.p : 0.0, !cand.legal});
  }
  return out;
}

// ---- joint loss ----------------------------------------------------------------

LossBreakdown ModelBundle::dialogue_loss(const Dialogue& dialogue, const DomainSchema& schema, bool accumulate,
                                         Rng* dropout, double word_dropout) {
  const int d = config_.d;
  LossBreakdown out;
  std::vector<TurnEncoding> encs;
  std::vector<Mat> dstates;
  encs.reserve(dialogue.turns.size());
  ContextStore store;
  const CrfScores crf = crf_scores();

  for (const Turn& turn : dialogue.turns) {
    const auto& tokens = turn.seeker_utterance.tokens;
    const int len = static_cast<int>(tokens.size());
    encs.push_back(encode_turn(tokens, dropout, word_dropout));
    dstates.push_back(Mat::Zero(d, len));
    store.begin_turn(tokens, turn.seeker_entities);
    const int t = static_cast<int>(encs.size()) - 1;
    ++out.turns;

    if (len > 0) {
      const Mat em = ner_emissions(encs[t]);
      const CrfGradient g = crf_nll(em, crf, mentions_to_tags(turn.seeker_entities, len, tags_));
      out.ner += g.nll;
      if (accumulate) {
        p_.crf_trans->grad += g.d_transitions;
        p_.crf_start->grad.col(0) += g.d_start;
        p_.crf_end->grad.col(0) += g.d_end;
        const Mat de = g.d_emissions.transpose();  // tags x len
        p_.ner_w->grad += de * encs[t].states.transpose();
        p_.ner_b->grad.col(0) += de.rowwise().sum();
        dstates[t] += p_.ner_w->value.transpose() * de;
      }
    }

    for (const ActionRecord& action : turn.provider_actions) {
      const DialogueContext& ctx = store.context();
      ContextCache cache;
      const ContextEmbedding emb = encode_context(ctx, encs, &cache);
      const Vec& c = emb.c;
      Vec dc = Vec::Zero(5 * d);

      const int target = action_index(action.name);
      if (target < 0) throw Error(ErrorCode::kSchemaMismatch, "action '" + action.name + "' not in model inventory");
      const Vec pre = p_.ap_w1->value * c + p_.ap_b1->value.col(0);
      const Vec h = pre.cwiseMax(0.0);
      const Vec logits = p_.ap_w2->value * h + p_.ap_b2->value.col(0);
      const double lse = log_sum_exp(logits);
      out.ap += lse - logits(target);
      ++out.actions;
      if (accumulate) {
        Vec dl = (logits.array() - lse).exp().matrix();
        dl(target) -= 1.0;
        p_.ap_w2->grad += dl * h.transpose();
        p_.ap_b2->grad.col(0) += dl;
        Vec dh = p_.ap_w2->value.transpose() * dl;
        for (int i = 0; i < dh.size(); ++i) {
          if (pre(i) <= 0.0) dh(i) = 0.0;
        }
        p_.ap_w1->grad += dh * c.transpose();
        p_.ap_b1->grad.col(0) += dh;
        dc += p_.ap_w1->value.transpose() * dh;
      }

      const ActionSignature* sig = schema.find_signature(action.name);
      for (const auto& [arg_name, binding] : action.args) {
        if (binding.source != BindingSource::kSeekerEntity || sig == nullptr) continue;
        const ArgumentSpec* spec = sig->find_argument(arg_name);
        if (spec == nullptr || schema.is_result_type(spec->type)) continue;
        const int gold = ctx.find_entity(binding.turn, binding.start, binding.end);
        if (gold < 0) {
          throw Error(ErrorCode::kAnnotationGap, dialogue.id + ": argument '" + arg_name + "' of " + action.name +
                                                     " points at an unannotated span");
        }
        const auto cands = af_forward(ctx, encs, c, action.name, *spec);
        ++out.arguments;
        Vec dq = Vec::Zero(3 * d);
        for (const auto& cand : cands) {
          if (!cand.legal) continue;
          const double y = cand.entity == gold ? 1.0 : 0.0;
          out.af += y * softplus(-cand.s) + (1.0 - y) * softplus(cand.s);
          if (!accumulate) continue;
          const double ds = cand.p - y;
          p_.af_v->grad.col(0) += ds * cand.a;
          p_.af_b0->grad(0, 0) += ds;
          const Vec dpre = ds * p_.af_v->value.col(0).cwiseProduct(Vec::Ones(cand.a.size()) - cand.a.cwiseAbs2());
          p_.af_wc->grad += dpre * c.transpose();
          p_.af_wx->grad += dpre * cand.u.transpose();
          p_.af_b->grad.col(0) += dpre;
          dc += p_.af_wc->value.transpose() * dpre;
          const Vec du = p_.af_wx->value.transpose() * dpre;
          const ContextEntity& e = ctx.entities[cand.entity];
          span_backward(e, encs, du.segment(0, d), dstates);
          p_.type->grad.col(type_id(e.mention.entity_type)) += du.segment(d, d);
          dq += du.segment(2 * d + kAfFlags, 3 * d);
        }
        if (accumulate) {
          p_.arg->grad.col(arg_id(spec->name)) += dq.segment(0, d);
          p_.type->grad.col(type_id(spec->type)) += dq.segment(d, d);
          p_.act->grad.col(key_id(action.name)) += dq.segment(2 * d, d);
        }
      }

      if (accumulate) context_backward(ctx, encs, cache, dc, dstates);
      store.record(action);
    }
  }

  if (accumulate) {
    for (std::size_t t = 0; t < encs.size(); ++t) {
      if (encs[t].ids.empty()) continue;
      const Mat dx = bigru_backward(p_.fwd, p_.bwd, encs[t].cache, dstates[t]);
      for (std::size_t j = 0; j < encs[t].ids.size(); ++j) {
        p_.tok->grad.col(encs[t].ids[j]) += dx.col(static_cast<int>(j)).head(d);
      }
    }
  }
  return out;
}

}  // namespace pref_teach
