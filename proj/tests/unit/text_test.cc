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

#include "oracles.h"
#include "pref_teach/context.h"
#include "pref_teach/tokenize.h"

namespace pt = pref_teach;

TEST_SUITE("text") {

TEST_CASE("tokenizer lowercases and splits punctuation") {
  CHECK(pt::tokenize("I follow San Francisco Giant") ==
        std::vector<std::string>{"i", "follow", "san", "francisco", "giant"});
  CHECK(pt::tokenize("What's my sports update?") ==
        std::vector<std::string>{"what", "'", "s", "my", "sports", "update", "?"});
  CHECK(pt::tokenize("  ") .empty());
  CHECK(pt::normalize_text("The  Yankees!") == "the yankees !");
  CHECK(pt::tokenize("caf\xc3\xa9 ol\xc3\xa9") == std::vector<std::string>{"caf\xc3\xa9", "ol\xc3\xa9"});
}

TEST_CASE("catalog features reproduce the worked example") {
  const auto r = pt::testing::catalog_golden();
  INFO(r.detail);
  CHECK(r.pass);
}

TEST_CASE("per-token anchoring marks every covered token") {
  std::vector<pt::Catalog> cats(1);
  cats[0].entity_type = "sport_team";
  cats[0].values = {"san francisco giant"};
  const auto f = pt::catalog_features(pt::tokenize("I follow San Francisco Giant"), cats, 3, pt::AnchorMode::kPerToken);
  CHECK(f.plane(3) == std::vector<std::vector<int>>{{0}, {0}, {1}, {1}, {1}});
  CHECK(f.plane(1) == std::vector<std::vector<int>>{{0}, {0}, {0}, {0}, {0}});
}

TEST_CASE("catalog matching normalizes the catalog side") {
  std::vector<pt::Catalog> cats(1);
  cats[0].entity_type = "cuisine";
  cats[0].values = {"thai"};
  cats[0].extended_values = {"dim sum"};
  const auto f = pt::catalog_features(pt::tokenize("Thai or Dim Sum"), cats, 2);
  CHECK(f.at(0, 1, 0) == 1);
  CHECK(f.at(2, 2, 0) == 1);
  CHECK(f.at(3, 1, 0) == 0);
  CHECK(pt::parse_anchor_mode("per-token") == pt::AnchorMode::kPerToken);
  CHECK(pt::parse_anchor_mode(pt::anchor_mode_name(pt::AnchorMode::kFirstToken)) == pt::AnchorMode::kFirstToken);
}

TEST_CASE("an utterance longer than n_max still gets every n-gram") {
  std::vector<pt::Catalog> cats(1);
  cats[0].entity_type = "t";
  cats[0].values = {"a b c d"};
  const auto f = pt::catalog_features({"a", "b", "c", "d"}, cats, 3);
  for (int n = 1; n <= 3; ++n) {
    for (int i = 0; i < 4; ++i) CHECK(f.at(i, n, 0) == 0);
  }
}

}  // TEST_SUITE
