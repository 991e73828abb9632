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

#include "pref_teach/error.h"
#include "pref_teach/simulator.h"
#include "pref_teach/tokenize.h"

namespace pref_teach {

namespace {

void append_plain(RealizedUtterance& out, std::string_view text) {
  out.text += text;
  for (auto& tok : tokenize(text)) out.tokens.push_back(std::move(tok));
}

std::vector<std::string> sorted(std::vector<std::string> v) {
  std::sort(v.begin(), v.end());
  return v;
}

}  // namespace

RealizedUtterance fill_template(const Template& tpl,
                                const std::vector<std::pair<std::string, std::string>>& bindings) {
  RealizedUtterance out;
  out.template_ids.push_back(tpl.id);
  std::vector<bool> used(bindings.size(), false);
  const std::string& text = tpl.text;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t open = text.find('{', pos);
    if (open == std::string::npos) {
      append_plain(out, std::string_view(text).substr(pos));
      break;
    }
    append_plain(out, std::string_view(text).substr(pos, open - pos));
    std::size_t close = text.find('}', open);
    if (close == std::string::npos) throw Error(ErrorCode::kParse, "unterminated slot in template '" + tpl.id + "'");
    const std::string slot = text.substr(open + 1, close - open - 1);
    std::size_t pick = bindings.size();
    for (std::size_t i = 0; i < bindings.size(); ++i) {
      if (!used[i] && bindings[i].first == slot) {
        pick = i;
        break;
      }
    }
    if (pick == bindings.size()) {
      throw Error(ErrorCode::kUnfilledSlot, "template '" + tpl.id + "' slot {" + slot + "} has no binding");
    }
    used[pick] = true;
    auto toks = tokenize(bindings[pick].second);
    if (toks.empty()) throw Error(ErrorCode::kUnfilledSlot, "empty value for slot {" + slot + "}");
    EntityMention m;
    m.start = static_cast<int>(out.tokens.size());
    m.end = m.start + static_cast<int>(toks.size());
    m.entity_type = slot;
    m.value = join_tokens(toks);
    out.text += bindings[pick].second;
    for (auto& t : toks) out.tokens.push_back(std::move(t));
    out.mentions.push_back(std::move(m));
    pos = close + 1;
  }
  return out;
}

RealizedUtterance realize_nlg(std::string_view act,
                              const std::vector<std::pair<std::string, std::string>>& bindings,
                              const std::vector<Template>& bank, Rng& rng, double paraphrase_prob) {
  std::vector<std::string> want;
  for (const auto& b : bindings) want.push_back(b.first);
  want = sorted(want);
  std::vector<const Template*> matching;
  for (const auto& t : bank) {
    if (t.act == act && sorted(t.slots()) == want) matching.push_back(&t);
  }
  if (matching.empty()) {
    std::string slots;
    for (const auto& w : want) slots += (slots.empty() ? "" : ",") + w;
    throw Error(ErrorCode::kMissingTemplate,
                "no template for act '" + std::string(act) + "' with slots {" + slots + "}");
  }
  const Template* pick = rng.bernoulli(paraphrase_prob) ? matching[rng.index(matching.size())] : matching.front();
  return fill_template(*pick, bindings);
}

void append_utterance(RealizedUtterance& into, const RealizedUtterance& part, std::string_view connector) {
  if (!into.tokens.empty() || !into.text.empty()) append_plain(into, connector);
  const int offset = static_cast<int>(into.tokens.size());
  into.text += part.text;
  into.tokens.insert(into.tokens.end(), part.tokens.begin(), part.tokens.end());
  for (auto m : part.mentions) {
    m.start += offset;
    m.end += offset;
    into.mentions.push_back(std::move(m));
  }
  into.template_ids.insert(into.template_ids.end(), part.template_ids.begin(), part.template_ids.end());
}

}  // namespace pref_teach
