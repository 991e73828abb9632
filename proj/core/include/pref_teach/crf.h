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

#ifndef PREF_TEACH_CRF_H_
#define PREF_TEACH_CRF_H_

#include <string>
#include <vector>

#include "pref_teach/domain.h"
#include "pref_teach/nn.h"

namespace pref_teach {

// BIO tag inventory: "O", then B-<type>, I-<type> for each entity type.
struct TagSet {
  std::vector<std::string> tags;
  std::vector<std::string> types;

  static TagSet bio(const std::vector<std::string>& entity_types);
  int size() const { return static_cast<int>(tags.size()); }
  int index(const std::string& tag) const;
  int begin_tag(int type) const { return 1 + 2 * type; }
  int inside_tag(int type) const { return 2 + 2 * type; }
};

// Which transitions are structurally allowed. Disallowed ones score -inf.
struct TransitionMask {
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> allowed;  // [from][to]
  Eigen::Matrix<bool, Eigen::Dynamic, 1> start_allowed;

  static TransitionMask all_allowed(int tags);
  // Forbids O -> I-x, B-x -> I-y and I-x -> I-y for x != y, and starting on I-x.
  static TransitionMask bio(const TagSet& tags);
};

// Linear-chain CRF scores. `emissions` is length x tags.
struct CrfScores {
  Mat transitions;  // [from][to]
  Vec start;
  Vec end;
  TransitionMask mask;

  double transition(int from, int to) const;
  double start_score(int tag) const;
};

double crf_sequence_score(const Mat& emissions, const CrfScores& crf, const std::vector<int>& tags);
double crf_log_partition(const Mat& emissions, const CrfScores& crf);
// Per-position tag marginals, length x tags.
Mat crf_marginals(const Mat& emissions, const CrfScores& crf);
std::vector<int> crf_viterbi(const Mat& emissions, const CrfScores& crf, double* best_score = nullptr);

struct CrfGradient {
  double nll = 0.0;
  Mat d_emissions;
  Mat d_transitions;
  Vec d_start;
  Vec d_end;
};

// Negative log-likelihood of `gold` and its gradient. Throws
// Error(kMalformedTags) if the gold sequence uses a forbidden transition.
CrfGradient crf_nll(const Mat& emissions, const CrfScores& crf, const std::vector<int>& gold);

// BIO tags for the given mentions (length `len`).
std::vector<int> mentions_to_tags(const std::vector<EntityMention>& mentions, int len, const TagSet& tags);
// Spans from a tag sequence; a stray I-x opens a new span.
std::vector<EntityMention> tags_to_mentions(const std::vector<int>& tags, const TagSet& tagset,
                                            const std::vector<std::string>& tokens);

}  // namespace pref_teach

#endif  // PREF_TEACH_CRF_H_
