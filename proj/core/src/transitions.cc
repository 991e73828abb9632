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
#include <cmath>
#include <set>

#include "pref_teach/error.h"
#include "pref_teach/simulator.h"

namespace pref_teach {

int TransitionMatrix::index_of(std::string_view api) const {
  for (std::size_t i = 0; i < apis.size(); ++i) {
    if (apis[i] == api) return static_cast<int>(i);
  }
  return -1;
}

void TransitionMatrix::validate() const {
  auto check = [](const std::vector<double>& v, const std::string& what) {
    double sum = 0.0;
    for (double p : v) {
      if (!(p >= 0.0)) throw Error(ErrorCode::kInvalidArgument, what + " has a negative entry");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw Error(ErrorCode::kInvalidArgument, what + " does not sum to 1");
  };
  if (start.size() != apis.size() || rows.size() != apis.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "transition matrix shape");
  }
  check(start, "start distribution");
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != apis.size() + 1) throw Error(ErrorCode::kDimensionMismatch, "transition row shape");
    check(rows[i], "row " + apis[i]);
  }
}

namespace {

std::set<std::string> argument_types(const ActionSignature& sig) {
  std::set<std::string> out;
  for (const auto& a : sig.arguments) out.insert(a.type);
  return out;
}

double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
  if (a.empty() && b.empty()) return 0.0;
  std::size_t inter = 0;
  for (const auto& x : a) inter += b.count(x);
  return static_cast<double>(inter) / static_cast<double>(a.size() + b.size() - inter);
}

// Scales `scores` to sum to `mass`; uniform if they are all zero.
std::vector<double> spread(const std::vector<double>& scores, double mass) {
  double total = 0.0;
  for (double s : scores) total += s;
  std::vector<double> out(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out[i] = total > 0.0 ? mass * scores[i] / total : mass / static_cast<double>(scores.size());
  }
  return out;
}

}  // namespace

TransitionMatrix estimate_transitions(const std::vector<Dialogue>& seeds, const MixingRatio& mixing,
                                      const DomainSchema& schema) {
  if (seeds.empty()) throw Error(ErrorCode::kEmptySeed, "no seed dialogues to estimate transitions from");
  const double msum = mixing.seed_counts + mixing.shared_entities + mixing.input_output;
  if (mixing.seed_counts < 0 || mixing.shared_entities < 0 || mixing.input_output < 0 ||
      std::abs(msum - 1.0) > 1e-9) {
    throw Error(ErrorCode::kInvalidArgument, "mixing weights must be non-negative and sum to 1");
  }

  TransitionMatrix tm;
  std::vector<const ActionSignature*> sigs = schema.goal_apis();
  for (const auto* s : sigs) tm.apis.push_back(s->name);
  const std::size_t n = tm.apis.size();
  if (n == 0) throw Error(ErrorCode::kInvalidArgument, "schema declares no goal APIs");

  std::vector<double> first(n, 0.0);
  std::vector<std::vector<double>> counts(n, std::vector<double>(n + 1, 0.0));
  double sequences = 0.0;
  for (const auto& d : seeds) {
    std::vector<int> seq;
    for (const auto& t : d.turns) {
      for (const auto& a : t.provider_actions) {
        if (a.kind != ActionKind::kApi) continue;
        const ActionSignature* sig = schema.find_signature(a.name);
        if (sig == nullptr || sig->kind != ActionKind::kApi) {
          throw Error(ErrorCode::kUnknownApi, "seed '" + d.id + "' calls unknown API '" + a.name + "'");
        }
        if (!sig->goal) continue;
        seq.push_back(tm.index_of(a.name));
      }
    }
    if (seq.empty()) continue;
    sequences += 1.0;
    first[seq.front()] += 1.0;
    for (std::size_t i = 0; i + 1 < seq.size(); ++i) counts[seq[i]][seq[i + 1]] += 1.0;
    counts[seq.back()][n] += 1.0;
  }

  tm.start.resize(n);
  for (std::size_t i = 0; i < n; ++i) tm.start[i] = (first[i] + 1.0) / (sequences + static_cast<double>(n));

  tm.rows.assign(n, std::vector<double>(n + 1, 0.0));
  for (std::size_t a = 0; a < n; ++a) {
    double total = 0.0;
    for (double c : counts[a]) total += c;
    std::vector<double> count_term(n + 1);
    for (std::size_t b = 0; b <= n; ++b) count_term[b] = (counts[a][b] + 1.0) / (total + static_cast<double>(n + 1));
    const double stop = count_term[n];

    const auto types_a = argument_types(*sigs[a]);
    std::vector<double> shared(n), io(n);
    for (std::size_t b = 0; b < n; ++b) {
      shared[b] = jaccard(types_a, argument_types(*sigs[b]));
      const bool feeds = sigs[a]->produces && argument_types(*sigs[b]).count(*sigs[a]->produces) > 0;
      io[b] = feeds ? 1.0 : 0.0;
    }
    shared = spread(shared, 1.0 - stop);
    io = spread(io, 1.0 - stop);

    for (std::size_t b = 0; b < n; ++b) {
      tm.rows[a][b] = mixing.seed_counts * count_term[b] + mixing.shared_entities * shared[b] +
                      mixing.input_output * io[b];
    }
    tm.rows[a][n] = stop;
  }
  return tm;
}

}  // namespace pref_teach
