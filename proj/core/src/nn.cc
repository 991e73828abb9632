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

#include "pref_teach/nn.h"

#include <cmath>
#include <limits>

#include "pref_teach/error.h"

namespace pref_teach {

Param& ParamStore::add(const std::string& name, int rows, int cols, double scale, Rng& rng) {
  if (contains(name)) throw Error(ErrorCode::kInvalidArgument, "duplicate parameter '" + name + "'");
  Param p;
  p.name = name;
  p.value = Mat::Zero(rows, cols);
  if (scale > 0.0) {
    for (int i = 0; i < rows; ++i) {
      for (int j = 0; j < cols; ++j) p.value(i, j) = (2.0 * rng.uniform() - 1.0) * scale;
    }
  }
  p.grad = Mat::Zero(rows, cols);
  p.m = Mat::Zero(rows, cols);
  p.v = Mat::Zero(rows, cols);
  params_.push_back(std::move(p));
  return params_.back();
}

Param& ParamStore::get(const std::string& name) {
  for (auto& p : params_) {
    if (p.name == name) return p;
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown parameter '" + name + "'");
}

const Param& ParamStore::get(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return p;
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown parameter '" + name + "'");
}

bool ParamStore::contains(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return true;
  }
  return false;
}

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p.grad.setZero();
}

void ParamStore::clip_grad_norm(double max_norm) {
  double sq = 0.0;
  for (const auto& p : params_) sq += p.grad.squaredNorm();
  const double norm = std::sqrt(sq);
  if (norm <= max_norm || norm == 0.0) return;
  const double s = max_norm / norm;
  for (auto& p : params_) p.grad *= s;
}

nlohmann::json ParamStore::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& p : params_) {
    std::vector<double> flat(p.value.data(), p.value.data() + p.value.size());
    arr.push_back({{"name", p.name}, {"rows", p.value.rows()}, {"cols", p.value.cols()}, {"data", flat}});
  }
  return arr;
}

void ParamStore::load_json(const nlohmann::json& j) {
  for (const auto& e : j) {
    Param& p = get(e.at("name").get<std::string>());
    const long rows = e.at("rows").get<long>();
    const long cols = e.at("cols").get<long>();
    if (rows != p.value.rows() || cols != p.value.cols()) {
      throw Error(ErrorCode::kDimensionMismatch, "parameter '" + p.name + "' has shape " + std::to_string(rows) +
                                                     "x" + std::to_string(cols) + " in checkpoint");
    }
    const auto data = e.at("data").get<std::vector<double>>();
    if (static_cast<long>(data.size()) != rows * cols) {
      throw Error(ErrorCode::kDimensionMismatch, "parameter '" + p.name + "' data length");
    }
    for (double x : data) {
      if (!std::isfinite(x)) throw Error(ErrorCode::kDimensionMismatch, "parameter '" + p.name + "' is not finite");
    }
    p.value = Eigen::Map<const Mat>(data.data(), rows, cols);
  }
}

void Adam::step(ParamStore& params) {
  ++t_;
  const double c1 = 1.0 - std::pow(config_.beta1, t_);
  const double c2 = 1.0 - std::pow(config_.beta2, t_);
  for (auto& p : params.all()) {
    p.m = config_.beta1 * p.m + (1.0 - config_.beta1) * p.grad;
    p.v = config_.beta2 * p.v + (1.0 - config_.beta2) * p.grad.cwiseAbs2();
    p.value.array() -= config_.lr * (p.m.array() / c1) / ((p.v.array() / c2).sqrt() + config_.eps);
  }
}

Vec sigmoid(const Vec& x) { return x.unaryExpr([](double v) { return sigmoid(v); }); }

double log_sum_exp(const Vec& x) {
  const double m = x.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((x.array() - m).exp().sum());
}

Vec softmax(const Vec& logits) {
  const double m = logits.maxCoeff();
  Vec e = (logits.array() - m).exp();
  return e / e.sum();
}

Gru Gru::create(ParamStore& store, const std::string& prefix, int input, int hidden, Rng& rng) {
  const double sx = 1.0 / std::sqrt(static_cast<double>(input));
  const double sh = 1.0 / std::sqrt(static_cast<double>(hidden));
  for (const char* g : {"z", "r", "n"}) {
    store.add(prefix + ".W" + g, hidden, input, sx, rng);
    store.add(prefix + ".U" + g, hidden, hidden, sh, rng);
    store.add(prefix + ".b" + g, hidden, 1, 0.0, rng);
  }
  return bind(store, prefix);
}

Gru Gru::bind(ParamStore& store, const std::string& prefix) {
  Gru g;
  g.Wz = &store.get(prefix + ".Wz");
  g.Wr = &store.get(prefix + ".Wr");
  g.Wn = &store.get(prefix + ".Wn");
  g.Uz = &store.get(prefix + ".Uz");
  g.Ur = &store.get(prefix + ".Ur");
  g.Un = &store.get(prefix + ".Un");
  g.bz = &store.get(prefix + ".bz");
  g.br = &store.get(prefix + ".br");
  g.bn = &store.get(prefix + ".bn");
  return g;
}

Vec gru_step(const Gru& g, const Vec& x, const Vec& h_prev, GruStep* cache) {
  Vec z = sigmoid(Vec(g.Wz->value * x + g.Uz->value * h_prev + g.bz->value.col(0)));
  Vec r = sigmoid(Vec(g.Wr->value * x + g.Ur->value * h_prev + g.br->value.col(0)));
  Vec n = (g.Wn->value * x + g.Un->value * r.cwiseProduct(h_prev) + g.bn->value.col(0)).array().tanh().matrix();
  Vec h = (Vec::Ones(z.size()) - z).cwiseProduct(n) + z.cwiseProduct(h_prev);
  if (cache != nullptr) *cache = {x, h_prev, z, r, n, h};
  return h;
}

Vec gru_step_backward(const Gru& g, const GruStep& c, const Vec& dh, Vec* dh_prev) {
  const Vec ones = Vec::Ones(c.z.size());
  Vec dn = dh.cwiseProduct(ones - c.z);
  Vec dz = dh.cwiseProduct(c.h_prev - c.n);
  Vec dhp = dh.cwiseProduct(c.z);

  Vec dn_pre = dn.cwiseProduct(ones - c.n.cwiseAbs2());
  const Vec rh = c.r.cwiseProduct(c.h_prev);
  g.Wn->grad += dn_pre * c.x.transpose();
  g.Un->grad += dn_pre * rh.transpose();
  g.bn->grad.col(0) += dn_pre;
  Vec dx = g.Wn->value.transpose() * dn_pre;
  Vec drh = g.Un->value.transpose() * dn_pre;
  Vec dr = drh.cwiseProduct(c.h_prev);
  dhp += drh.cwiseProduct(c.r);

  Vec dz_pre = dz.cwiseProduct(c.z.cwiseProduct(ones - c.z));
  g.Wz->grad += dz_pre * c.x.transpose();
  g.Uz->grad += dz_pre * c.h_prev.transpose();
  g.bz->grad.col(0) += dz_pre;
  dx += g.Wz->value.transpose() * dz_pre;
  dhp += g.Uz->value.transpose() * dz_pre;

  Vec dr_pre = dr.cwiseProduct(c.r.cwiseProduct(ones - c.r));
  g.Wr->grad += dr_pre * c.x.transpose();
  g.Ur->grad += dr_pre * c.h_prev.transpose();
  g.br->grad.col(0) += dr_pre;
  dx += g.Wr->value.transpose() * dr_pre;
  dhp += g.Ur->value.transpose() * dr_pre;

  if (dh_prev != nullptr) *dh_prev = dhp;
  return dx;
}

Mat bigru_forward(const Gru& fwd, const Gru& bwd, const Mat& X, BiGruCache* cache) {
  const int len = static_cast<int>(X.cols());
  const int h = fwd.hidden();
  Mat S(2 * h, len);
  if (cache != nullptr) {
    cache->fwd.assign(len, {});
    cache->bwd.assign(len, {});
  }
  Vec hf = Vec::Zero(h);
  for (int t = 0; t < len; ++t) {
    hf = gru_step(fwd, X.col(t), hf, cache ? &cache->fwd[t] : nullptr);
    S.block(0, t, h, 1) = hf;
  }
  Vec hb = Vec::Zero(h);
  for (int t = len - 1; t >= 0; --t) {
    hb = gru_step(bwd, X.col(t), hb, cache ? &cache->bwd[t] : nullptr);
    S.block(h, t, h, 1) = hb;
  }
  return S;
}

Mat bigru_backward(const Gru& fwd, const Gru& bwd, const BiGruCache& cache, const Mat& dS) {
  const int len = static_cast<int>(dS.cols());
  const int h = fwd.hidden();
  Mat dX = Mat::Zero(fwd.input(), len);
  Vec carry = Vec::Zero(h);
  for (int t = len - 1; t >= 0; --t) {
    Vec dh = dS.block(0, t, h, 1) + carry;
    dX.col(t) += gru_step_backward(fwd, cache.fwd[t], dh, &carry);
  }
  carry = Vec::Zero(h);
  for (int t = 0; t < len; ++t) {
    Vec dh = dS.block(h, t, h, 1) + carry;
    dX.col(t) += gru_step_backward(bwd, cache.bwd[t], dh, &carry);
  }
  return dX;
}

}  // namespace pref_teach
