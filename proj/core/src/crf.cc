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

#include "pref_teach/crf.h"

#include <limits>

#include "pref_teach/error.h"
#include "pref_teach/tokenize.h"

namespace pref_teach {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

TagSet TagSet::bio(const std::vector<std::string>& entity_types) {
  TagSet t;
  t.types = entity_types;
  t.tags.push_back("O");
  for (const auto& type : entity_types) {
    t.tags.push_back("B-" + type);
    t.tags.push_back("I-" + type);
  }
  return t;
}

int TagSet::index(const std::string& tag) const {
  for (std::size_t i = 0; i < tags.size(); ++i) {
    if (tags[i] == tag) return static_cast<int>(i);
  }
  return -1;
}

TransitionMask TransitionMask::all_allowed(int tags) {
  TransitionMask m;
  m.allowed.setConstant(tags, tags, true);
  m.start_allowed.setConstant(tags, true);
  return m;
}

TransitionMask TransitionMask::bio(const TagSet& tags) {
  TransitionMask m = all_allowed(tags.size());
  const int types = static_cast<int>(tags.types.size());
  for (int y = 0; y < types; ++y) {
    const int inside = tags.inside_tag(y);
    m.start_allowed(inside) = false;
    for (int from = 0; from < tags.size(); ++from) {
      const bool ok = from == tags.begin_tag(y) || from == tags.inside_tag(y);
      m.allowed(from, inside) = ok;
    }
  }
  return m;
}

double CrfScores::transition(int from, int to) const {
  return mask.allowed(from, to) ? transitions(from, to) : kNegInf;
}

double CrfScores::start_score(int tag) const { return mask.start_allowed(tag) ? start(tag) : kNegInf; }

double crf_sequence_score(const Mat& E, const CrfScores& crf, const std::vector<int>& tags) {
  if (tags.empty()) return 0.0;
  double s = crf.start_score(tags[0]) + E(0, tags[0]);
  for (std::size_t t = 1; t < tags.size(); ++t) s += crf.transition(tags[t - 1], tags[t]) + E(t, tags[t]);
  return s + crf.end(tags.back());
}

namespace {

// alpha[t][k]: log-sum of scores of prefixes ending in tag k at t.
Mat forward_table(const Mat& E, const CrfScores& crf) {
  const int len = static_cast<int>(E.rows());
  const int k = static_cast<int>(E.cols());
  Mat alpha(len, k);
  for (int j = 0; j < k; ++j) alpha(0, j) = crf.start_score(j) + E(0, j);
  Vec tmp(k);
  for (int t = 1; t < len; ++t) {
    for (int j = 0; j < k; ++j) {
      for (int i = 0; i < k; ++i) tmp(i) = alpha(t - 1, i) + crf.transition(i, j);
      alpha(t, j) = log_sum_exp(tmp) + E(t, j);
    }
  }
  return alpha;
}

// beta[t][k]: log-sum of scores of suffixes after position t given tag k.
Mat backward_table(const Mat& E, const CrfScores& crf) {
  const int len = static_cast<int>(E.rows());
  const int k = static_cast<int>(E.cols());
  Mat beta(len, k);
  for (int i = 0; i < k; ++i) beta(len - 1, i) = crf.end(i);
  Vec tmp(k);
  for (int t = len - 2; t >= 0; --t) {
    for (int i = 0; i < k; ++i) {
      for (int j = 0; j < k; ++j) tmp(j) = crf.transition(i, j) + E(t + 1, j) + beta(t + 1, j);
      beta(t, i) = log_sum_exp(tmp);
    }
  }
  return beta;
}

}  // namespace

double crf_log_partition(const Mat& E, const CrfScores& crf) {
  if (E.rows() == 0) return 0.0;
  Mat alpha = forward_table(E, crf);
  Vec last = alpha.row(E.rows() - 1).transpose() + crf.end;
  return log_sum_exp(last);
}

Mat crf_marginals(const Mat& E, const CrfScores& crf) {
  if (E.rows() == 0) return Mat(0, E.cols());
  Mat alpha = forward_table(E, crf);
  Mat beta = backward_table(E, crf);
  const double log_z = log_sum_exp(Vec(alpha.row(E.rows() - 1).transpose() + crf.end));
  Mat out = (alpha + beta).array() - log_z;
  return out.array().exp();
}

std::vector<int> crf_viterbi(const Mat& E, const CrfScores& crf, double* best_score) {
  const int len = static_cast<int>(E.rows());
  const int k = static_cast<int>(E.cols());
  if (len == 0) {
    if (best_score) *best_score = 0.0;
    return {};
  }
  Mat delta(len, k);
  Eigen::MatrixXi back(len, k);
  for (int j = 0; j < k; ++j) delta(0, j) = crf.start_score(j) + E(0, j);
  for (int t = 1; t < len; ++t) {
    for (int j = 0; j < k; ++j) {
      double best = kNegInf;
      int arg = 0;
      for (int i = 0; i < k; ++i) {
        const double s = delta(t - 1, i) + crf.transition(i, j);
        if (s > best) {
          best = s;
          arg = i;
        }
      }
      delta(t, j) = best + E(t, j);
      back(t, j) = arg;
    }
  }
  double best = kNegInf;
  int arg = 0;
  for (int j = 0; j < k; ++j) {
    const double s = delta(len - 1, j) + crf.end(j);
    if (s > best) {
      best = s;
      arg = j;
    }
  }
  std::vector<int> path(len);
  path[len - 1] = arg;
  for (int t = len - 1; t > 0; --t) path[t - 1] = back(t, path[t]);
  if (best_score) *best_score = best;
  return path;
}

CrfGradient crf_nll(const Mat& E, const CrfScores& crf, const std::vector<int>& gold) {
  const int len = static_cast<int>(E.rows());
  const int k = static_cast<int>(E.cols());
  if (static_cast<int>(gold.size()) != len) throw Error(ErrorCode::kMalformedTags, "gold tag length mismatch");
  CrfGradient g;
  g.d_emissions = Mat::Zero(len, k);
  g.d_transitions = Mat::Zero(k, k);
  g.d_start = Vec::Zero(k);
  g.d_end = Vec::Zero(k);
  if (len == 0) return g;
  for (int t = 0; t < len; ++t) {
    if (gold[t] < 0 || gold[t] >= k) throw Error(ErrorCode::kMalformedTags, "gold tag out of range");
  }
  if (!crf.mask.start_allowed(gold[0])) throw Error(ErrorCode::kMalformedTags, "gold sequence starts inside a span");
  for (int t = 1; t < len; ++t) {
    if (!crf.mask.allowed(gold[t - 1], gold[t])) {
      throw Error(ErrorCode::kMalformedTags, "gold sequence uses a forbidden transition");
    }
  }

  Mat alpha = forward_table(E, crf);
  Mat beta = backward_table(E, crf);
  const double log_z = log_sum_exp(Vec(alpha.row(len - 1).transpose() + crf.end));
  g.nll = log_z - crf_sequence_score(E, crf, gold);

  Mat marg = ((alpha + beta).array() - log_z).exp();
  g.d_emissions = marg;
  for (int j = 0; j < k; ++j) {
    g.d_start(j) = marg(0, j);
    g.d_end(j) = marg(len - 1, j);
  }
  for (int t = 1; t < len; ++t) {
    for (int i = 0; i < k; ++i) {
      if (!std::isfinite(alpha(t - 1, i))) continue;
      for (int j = 0; j < k; ++j) {
        if (!crf.mask.allowed(i, j)) continue;
        g.d_transitions(i, j) += std::exp(alpha(t - 1, i) + crf.transitions(i, j) + E(t, j) + beta(t, j) - log_z);
      }
    }
  }
  g.d_emissions(0, gold[0]) -= 1.0;
  g.d_start(gold[0]) -= 1.0;
  for (int t = 1; t < len; ++t) {
    g.d_emissions(t, gold[t]) -= 1.0;
    g.d_transitions(gold[t - 1], gold[t]) -= 1.0;
  }
  g.d_end(gold[len - 1]) -= 1.0;
  return g;
}

std::vector<int> mentions_to_tags(const std::vector<EntityMention>& mentions, int len, const TagSet& tags) {
  std::vector<int> out(len, 0);
  for (const auto& m : mentions) {
    int type = -1;
    for (std::size_t i = 0; i < tags.types.size(); ++i) {
      if (tags.types[i] == m.entity_type) type = static_cast<int>(i);
    }
    if (type < 0) throw Error(ErrorCode::kUnknownEntityType, "unknown entity type '" + m.entity_type + "'");
    if (m.start < 0 || m.end > len || m.start >= m.end) throw Error(ErrorCode::kMalformedTags, "mention out of range");
    out[m.start] = tags.begin_tag(type);
    for (int t = m.start + 1; t < m.end; ++t) out[t] = tags.inside_tag(type);
  }
  return out;
}

std::vector<EntityMention> tags_to_mentions(const std::vector<int>& tags, const TagSet& tagset,
                                            const std::vector<std::string>& tokens) {
  std::vector<EntityMention> out;
  const int len = static_cast<int>(tags.size());
  int t = 0;
  while (t < len) {
    const int tag = tags[t];
    if (tag == 0) {
      ++t;
      continue;
    }
    const int type = (tag - 1) / 2;
    int end = t + 1;
    while (end < len && tags[end] == tagset.inside_tag(type)) ++end;
    EntityMention m;
    m.start = t;
    m.end = end;
    m.entity_type = tagset.types[type];
    std::vector<std::string> span(tokens.begin() + t, tokens.begin() + end);
    m.value = join_tokens(span);
    out.push_back(std::move(m));
    t = end;
  }
  return out;
}

}  // namespace pref_teach
