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

#ifndef PREF_TEACH_NN_H_
#define PREF_TEACH_NN_H_

#include <cmath>
#include <deque>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "pref_teach/random.h"

namespace pref_teach {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// A trainable tensor with its gradient and Adam moments.
struct Param {
  std::string name;
  Mat value;
  Mat grad;
  Mat m;
  Mat v;
};

// Owns parameters; references returned by add() stay valid.
class ParamStore {
 public:
  // Uniform(-scale, scale) initialization; scale 0 gives zeros.
  Param& add(const std::string& name, int rows, int cols, double scale, Rng& rng);
  Param& get(const std::string& name);
  const Param& get(const std::string& name) const;
  bool contains(const std::string& name) const;

  std::deque<Param>& all() { return params_; }
  const std::deque<Param>& all() const { return params_; }
  std::size_t parameter_count() const;

  void zero_grad();
  // Rescales all gradients so their global L2 norm is at most max_norm.
  void clip_grad_norm(double max_norm);

  nlohmann::json to_json() const;
  // Shapes must match the already-registered parameters.
  void load_json(const nlohmann::json& j);

 private:
  std::deque<Param> params_;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}
  void step(ParamStore& params);
  int steps() const { return t_; }

 private:
  AdamConfig config_;
  int t_ = 0;
};

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Vec sigmoid(const Vec& x);
// Numerically stable log(sum(exp(x))); -inf for an all -inf input.
double log_sum_exp(const Vec& x);
Vec softmax(const Vec& logits);

// Gated recurrent unit:
//   z = s(Wz x + Uz h + bz), r = s(Wr x + Ur h + br)
//   n = tanh(Wn x + Un (r * h) + bn), h' = (1 - z) * n + z * h
struct Gru {
  Param* Wz = nullptr;
  Param* Wr = nullptr;
  Param* Wn = nullptr;
  Param* Uz = nullptr;
  Param* Ur = nullptr;
  Param* Un = nullptr;
  Param* bz = nullptr;
  Param* br = nullptr;
  Param* bn = nullptr;

  static Gru create(ParamStore& store, const std::string& prefix, int input, int hidden, Rng& rng);
  static Gru bind(ParamStore& store, const std::string& prefix);
  int hidden() const { return static_cast<int>(Uz->value.rows()); }
  int input() const { return static_cast<int>(Wz->value.cols()); }
};

struct GruStep {
  Vec x;
  Vec h_prev;
  Vec z;
  Vec r;
  Vec n;
  Vec h;
};

Vec gru_step(const Gru& gru, const Vec& x, const Vec& h_prev, GruStep* cache);
// Accumulates parameter gradients; returns dx and writes dh_prev.
Vec gru_step_backward(const Gru& gru, const GruStep& cache, const Vec& dh, Vec* dh_prev);

struct BiGruCache {
  std::vector<GruStep> fwd;
  std::vector<GruStep> bwd;
};

// X is input x length; returns (2 * hidden) x length states [forward; backward].
Mat bigru_forward(const Gru& fwd, const Gru& bwd, const Mat& X, BiGruCache* cache);
// Returns dX given dStates; accumulates parameter gradients.
Mat bigru_backward(const Gru& fwd, const Gru& bwd, const BiGruCache& cache, const Mat& dStates);

}  // namespace pref_teach

#endif  // PREF_TEACH_NN_H_
