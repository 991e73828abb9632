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

#include <cmath>
#include <limits>

#include "pref_teach/nn.h"
#include "pref_teach/random.h"

namespace pt = pref_teach;

TEST_SUITE("nn") {

TEST_CASE("softmax and log-sum-exp are stable") {
  pt::Vec x(3);
  x << 1000.0, 1000.0, -1000.0;
  const pt::Vec p = pt::softmax(x);
  CHECK(p(0) == doctest::Approx(0.5));
  CHECK(p(2) == doctest::Approx(0.0));
  CHECK(pt::log_sum_exp(x) == doctest::Approx(1000.0 + std::log(2.0)));
  pt::Vec inf = pt::Vec::Constant(2, -std::numeric_limits<double>::infinity());
  CHECK(std::isinf(pt::log_sum_exp(inf)));
  CHECK(pt::sigmoid(-800.0) >= 0.0);
  CHECK(pt::sigmoid(0.0) == doctest::Approx(0.5));
}

TEST_CASE("bidirectional GRU backward matches central differences") {
  pt::Rng rng(4);
  pt::ParamStore store;
  auto fwd = pt::Gru::create(store, "f", 3, 2, rng);
  auto bwd = pt::Gru::create(store, "b", 3, 2, rng);
  pt::Mat X = pt::Mat::Random(3, 4);
  pt::Mat W = pt::Mat::Random(4, 4);  // loss = sum(W .* states)
  auto loss = [&] { return (pt::bigru_forward(fwd, bwd, X, nullptr).array() * W.array()).sum(); };

  store.zero_grad();
  pt::BiGruCache cache;
  pt::bigru_forward(fwd, bwd, X, &cache);
  const pt::Mat dX = pt::bigru_backward(fwd, bwd, cache, W);
  const double h = 1e-6;
  for (pt::Param& p : store.all()) {
    for (Eigen::Index i = 0; i < p.value.size(); ++i) {
      const double orig = p.value(i);
      p.value(i) = orig + h;
      const double up = loss();
      p.value(i) = orig - h;
      const double down = loss();
      p.value(i) = orig;
      CHECK(p.grad(i) == doctest::Approx((up - down) / (2 * h)).epsilon(1e-6));
    }
  }
  for (Eigen::Index i = 0; i < X.size(); ++i) {
    const double orig = X(i);
    X(i) = orig + h;
    const double up = loss();
    X(i) = orig - h;
    const double down = loss();
    X(i) = orig;
    CHECK(dX(i) == doctest::Approx((up - down) / (2 * h)).epsilon(1e-6));
  }
}

TEST_CASE("Adam drives a quadratic to its minimum") {
  pt::Rng rng(2);
  pt::ParamStore store;
  pt::Param& w = store.add("w", 2, 1, 1.0, rng);
  pt::Adam adam({0.05});
  for (int k = 0; k < 2000; ++k) {
    store.zero_grad();
    w.grad(0) = 2.0 * (w.value(0) - 3.0);
    w.grad(1) = 2.0 * (w.value(1) + 1.0);
    adam.step(store);
  }
  CHECK(w.value(0) == doctest::Approx(3.0).epsilon(1e-3));
  CHECK(w.value(1) == doctest::Approx(-1.0).epsilon(1e-3));
  CHECK(adam.steps() == 2000);
}

TEST_CASE("gradient clipping bounds the global norm") {
  pt::Rng rng(2);
  pt::ParamStore store;
  pt::Param& a = store.add("a", 2, 1, 0.0, rng);
  pt::Param& b = store.add("b", 1, 1, 0.0, rng);
  a.grad << 3.0, 0.0;
  b.grad << 4.0;
  store.clip_grad_norm(1.0);
  CHECK(std::sqrt(a.grad.squaredNorm() + b.grad.squaredNorm()) == doctest::Approx(1.0));
  CHECK(a.grad(0) == doctest::Approx(0.6));
  store.clip_grad_norm(10.0);
  CHECK(b.grad(0) == doctest::Approx(0.8));
}

TEST_CASE("parameter store JSON round trip keeps values and rejects shape changes") {
  pt::Rng rng(8);
  pt::ParamStore a;
  a.add("x", 2, 3, 1.0, rng);
  pt::ParamStore b;
  b.add("x", 2, 3, 0.0, rng);
  b.load_json(a.to_json());
  CHECK(b.get("x").value == a.get("x").value);
  pt::ParamStore c;
  c.add("x", 3, 2, 0.0, rng);
  CHECK_THROWS(c.load_json(a.to_json()));
  CHECK(a.parameter_count() == 6);
}

}  // TEST_SUITE
