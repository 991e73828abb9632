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
#include <optional>
#include <set>
#include <tuple>

#include "pref_teach/error.h"
#include "pref_teach/simulator.h"

namespace pref_teach {

void VariationConfig::validate() const {
  for (double p : {entity_resample_prob, paraphrase_prob, error_injection_rate, transfer_prob}) {
    if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorCode::kInvalidArgument, "variation probability outside [0,1]");
  }
  const double m = mixing.seed_counts + mixing.shared_entities + mixing.input_output;
  if (mixing.seed_counts < 0 || mixing.shared_entities < 0 || mixing.input_output < 0 || std::abs(m - 1.0) > 1e-9) {
    throw Error(ErrorCode::kInvalidArgument, "mixing weights must be non-negative and sum to 1");
  }
  if (event_weights.omission < 0 || event_weights.premature_update < 0 || event_weights.aborted_reset < 0) {
    throw Error(ErrorCode::kInvalidArgument, "event weights must be non-negative");
  }
  if (max_apis < 1) throw Error(ErrorCode::kInvalidArgument, "max_apis must be at least 1");
}

namespace {

struct Located {
  int turn = -1;
  int start = 0;
  int end = 0;
  std::string value;
};

struct ApiPlan {
  int vertex = -1;
  const ActionSignature* sig = nullptr;
  std::map<std::string, int> sources;  // argument -> goal vertex
  std::map<std::string, Located> located;
};

// Minimal preference-set model used to annotate empty API outcomes.
class KbModel {
 public:
  bool apply(const ActionSignature& sig, const std::map<std::string, std::string>& values) {
    const KbMapping& kb = sig.kb;
    auto get = [&](const std::string& arg) {
      auto it = values.find(arg);
      return it == values.end() ? std::string() : it->second;
    };
    switch (kb.op) {
      case KbOp::kNone:
        return false;
      case KbOp::kUpsert:
        records_.insert({kb.domain, kb.entity_type, get(kb.value_argument), get(kb.condition_argument)});
        return false;
      case KbOp::kDelete: {
        const std::string value = get(kb.value_argument);
        std::size_t before = records_.size();
        std::erase_if(records_, [&](const Key& k) {
          return std::get<0>(k) == kb.domain && std::get<1>(k) == kb.entity_type && std::get<2>(k) == value;
        });
        return before == records_.size();
      }
      case KbOp::kDeleteAll: {
        bool empty = records_.empty();
        records_.clear();
        return empty;
      }
      case KbOp::kRetrieve:
        return std::none_of(records_.begin(), records_.end(), [&](const Key& k) {
          return (kb.domain.empty() || std::get<0>(k) == kb.domain) &&
                 (kb.entity_type.empty() || std::get<1>(k) == kb.entity_type);
        });
    }
    return false;
  }

 private:
  using Key = std::tuple<std::string, std::string, std::string, std::string>;
  std::set<Key> records_;
};

class Interaction {
 public:
  Interaction(const EntityTransferGraph& goal, const SeekerPolicy& seeker, const ProviderPolicy& provider,
              const DomainSchema& schema, const VariationConfig& variation, Rng& rng)
      : goal_(goal), seeker_(seeker), provider_(provider), schema_(schema), variation_(variation), rng_(rng) {}

  Dialogue run() {
    validate_goal(goal_, schema_);
    dialogue_.goal = goal_;
    build_plans();
    choose_variations();

    if (event_ == Event::kPrematureUpdate) premature_update();
    if (event_ == Event::kAbortedReset) aborted_reset();
    opening_turn();
    while (!ended_) {
      if (static_cast<int>(dialogue_.turns.size()) >= provider_.max_turns) {
        throw Error(ErrorCode::kDeadlock, "interaction exceeded " + std::to_string(provider_.max_turns) + " turns");
      }
      seeker_reply();
    }
    return std::move(dialogue_);
  }

 private:
  enum class Event { kNone, kOmission, kPrematureUpdate, kAbortedReset };

  bool is_slot_type(const std::string& type) const {
    const EntityTypeDef* et = schema_.find_entity_type(type);
    return et != nullptr && et->role == EntityRole::kSlot;
  }
  bool is_confirmation_type(const std::string& type) const {
    const EntityTypeDef* et = schema_.find_entity_type(type);
    return et != nullptr && et->role == EntityRole::kConfirmation;
  }

  void build_plans() {
    for (int v : goal_.api_vertices()) {
      ApiPlan p;
      p.vertex = v;
      p.sig = schema_.find_signature(goal_.vertices[v].api);
      for (const auto& e : goal_.edges) {
        if (e.to == v) p.sources[e.argument] = e.from;
      }
      plans_.push_back(std::move(p));
    }
  }

  std::vector<std::pair<int, std::string>> withholdable() const {
    std::map<std::string, int> type_count;
    for (const auto& p : plans_) {
      for (const auto& a : p.sig->arguments) {
        if (is_slot_type(a.type) && p.sources.count(a.name)) ++type_count[a.type];
      }
    }
    std::vector<std::pair<int, std::string>> out;
    for (int i = 0; i < static_cast<int>(plans_.size()); ++i) {
      const auto& p = plans_[i];
      if (!p.sig->goal) continue;
      for (const auto& a : p.sig->arguments) {
        if (is_slot_type(a.type) && p.sources.count(a.name) && type_count[a.type] == 1) out.emplace_back(i, a.name);
      }
    }
    return out;
  }

  const ActionSignature* premature_update_api() const {
    for (const auto& s : schema_.signatures) {
      if (s.kind == ActionKind::kApi && !s.goal && s.kb.op == KbOp::kRetrieve && !s.kb.domain.empty() &&
          schema_.find_signature(notify_failure_action(s.name)) != nullptr &&
          !schema_.templates_for(inform_act(s.name)).empty()) {
        return &s;
      }
    }
    return nullptr;
  }

  const ActionSignature* retrieve_all_api() const {
    for (const auto& s : schema_.signatures) {
      if (s.kind == ActionKind::kApi && !s.goal && s.kb.op == KbOp::kRetrieve && s.kb.domain.empty() &&
          s.kb.entity_type.empty()) {
        return &s;
      }
    }
    return nullptr;
  }

  const ActionSignature* delete_all_api() const {
    for (const auto& s : schema_.signatures) {
      if (s.kind == ActionKind::kApi && s.kb.op == KbOp::kDeleteAll) return &s;
    }
    return nullptr;
  }

  const EntityTypeDef* denial_type() const {
    for (const auto& t : schema_.entity_types) {
      if (t.role == EntityRole::kDenial) return &t;
    }
    return nullptr;
  }

  void choose_variations() {
    auto candidates = withholdable();
    std::optional<std::pair<int, std::string>> forced;
    if (rng_.bernoulli(variation_.error_injection_rate)) {
      const ActionSignature* del_all = delete_all_api();
      const EntityTypeDef* denial = denial_type();
      const bool reset_ok = del_all != nullptr && retrieve_all_api() != nullptr && denial != nullptr &&
                            schema_.find_signature(notify_cancelled_action(del_all->name)) != nullptr &&
                            !schema_.templates_for(inform_act(del_all->name)).empty() &&
                            !schema_.templates_for(kDenyAct).empty();
      const double weights[3] = {
          candidates.empty() ? 0.0 : variation_.event_weights.omission,
          premature_update_api() == nullptr ? 0.0 : variation_.event_weights.premature_update,
          reset_ok ? variation_.event_weights.aborted_reset : 0.0};
      if (weights[0] + weights[1] + weights[2] > 0.0) {
        switch (rng_.categorical(weights)) {
          case 0:
            event_ = Event::kOmission;
            forced = candidates[rng_.index(candidates.size())];
            break;
          case 1: event_ = Event::kPrematureUpdate; break;
          default: event_ = Event::kAbortedReset; break;
        }
      }
    }
    for (const auto& c : candidates) {
      if ((forced && *forced == c) || rng_.bernoulli(seeker_.withhold_prob)) withheld_.insert(c);
    }
  }

  const std::string& vertex_value(int v) const { return goal_.vertices[v].value; }

  int begin_turn(const RealizedUtterance& u, std::vector<std::string> acts) {
    Turn t;
    t.seeker_utterance.text = u.text;
    t.seeker_utterance.tokens = u.tokens;
    t.seeker_utterance.speaker = Speaker::kSeeker;
    t.seeker_entities = u.mentions;
    t.user_nlgs = std::move(acts);
    dialogue_.turns.push_back(std::move(t));
    auto& ids = dialogue_.metadata.template_ids;
    ids.insert(ids.end(), u.template_ids.begin(), u.template_ids.end());
    return static_cast<int>(dialogue_.turns.size()) - 1;
  }

  void emit(ActionRecord a) { dialogue_.turns.back().provider_actions.push_back(std::move(a)); }

  void emit_sys(std::string_view name) {
    ActionRecord a;
    a.kind = ActionKind::kSys;
    a.name = std::string(name);
    emit(std::move(a));
    if (name == kEndDialogue) ended_ = true;
  }

  void emit_nlg(const std::string& name, std::map<std::string, ArgumentBinding> args = {}) {
    ActionRecord a;
    a.kind = ActionKind::kNlg;
    a.name = name;
    a.args = std::move(args);
    emit(std::move(a));
  }

  // Emits the API call plus its success/failure notification; returns the handle.
  std::string call(const ActionSignature& sig, std::map<std::string, ArgumentBinding> args,
                   const std::map<std::string, std::string>& values, bool failure_on_empty = false) {
    ActionRecord a;
    a.kind = ActionKind::kApi;
    a.name = sig.name;
    a.args = std::move(args);
    const std::string handle = sig.result_name + std::to_string(++handle_counter_[sig.result_name]);
    a.result_ref = handle;
    a.empty_result = kb_.apply(sig, values);
    const bool failed = failure_on_empty && a.empty_result;
    emit(std::move(a));
    const std::string notify = failed ? notify_failure_action(sig.name) : notify_success_action(sig.name);
    if (const ActionSignature* nsig = schema_.find_signature(notify)) {
      std::map<std::string, ArgumentBinding> nargs;
      for (const auto& arg : nsig->arguments) {
        if (sig.produces && arg.type == *sig.produces) nargs[arg.name] = ArgumentBinding::api_result(handle);
      }
      emit_nlg(notify, std::move(nargs));
    }
    return handle;
  }

  void premature_update() {
    const ActionSignature* api = premature_update_api();
    RealizedUtterance u = realize_nlg(inform_act(api->name), {}, schema_.seeker_templates, rng_,
                                      variation_.paraphrase_prob);
    begin_turn(u, {inform_act(api->name)});
    call(*api, {}, {}, /*failure_on_empty=*/true);
    emit_sys(kWaitForUserInput);
  }

  void aborted_reset() {
    const ActionSignature* del_all = delete_all_api();
    RealizedUtterance u = realize_nlg(inform_act(del_all->name), {}, schema_.seeker_templates, rng_,
                                      variation_.paraphrase_prob);
    begin_turn(u, {inform_act(del_all->name)});
    call(*retrieve_all_api(), {}, {});
    emit_sys(kWaitForUserInput);

    const EntityTypeDef* denial = denial_type();
    const Catalog* cat = schema_.find_catalog(denial->name);
    const std::string value = cat->values[rng_.index(cat->values.size())];
    RealizedUtterance no = realize_nlg(kDenyAct, {{denial->name, value}}, schema_.seeker_templates, rng_,
                                       variation_.paraphrase_prob);
    begin_turn(no, {std::string(kDenyAct)});
    emit_nlg(notify_cancelled_action(del_all->name));
    emit_sys(kWaitForUserInput);
  }

  void locate(ApiPlan& plan, int turn, const RealizedUtterance& u, std::size_t first_mention,
              const std::vector<std::string>& args) {
    for (const auto& arg : args) {
      const ArgumentSpec* spec = plan.sig->find_argument(arg);
      for (std::size_t m = first_mention; m < u.mentions.size(); ++m) {
        const auto& mention = u.mentions[m];
        if (mention.entity_type == spec->type) {
          plan.located[arg] = {turn, mention.start, mention.end, mention.value};
          break;
        }
      }
    }
  }

  void opening_turn() {
    RealizedUtterance whole;
    std::vector<std::string> acts;
    struct Pending {
      int plan;
      std::size_t first_mention;
      std::vector<std::string> args;
    };
    std::vector<Pending> pending;
    for (int i = 0; i < static_cast<int>(plans_.size()); ++i) {
      ApiPlan& p = plans_[i];
      if (!p.sig->goal) continue;
      std::vector<std::pair<std::string, std::string>> bindings;
      std::vector<std::string> args;
      for (const auto& a : p.sig->arguments) {
        if (!is_slot_type(a.type) || !p.sources.count(a.name) || withheld_.count({i, a.name})) continue;
        bindings.emplace_back(a.type, vertex_value(p.sources.at(a.name)));
        args.push_back(a.name);
      }
      RealizedUtterance clause = realize_nlg(inform_act(p.sig->name), bindings, schema_.seeker_templates, rng_,
                                             variation_.paraphrase_prob);
      const std::string connector = seeker_.connectors.empty()
                                        ? std::string(" and ")
                                        : seeker_.connectors[rng_.index(seeker_.connectors.size())];
      const std::size_t first = whole.mentions.size();
      append_utterance(whole, clause, connector);
      pending.push_back({i, first, args});
      acts.push_back(inform_act(p.sig->name));
    }
    const int turn = begin_turn(whole, std::move(acts));
    for (const auto& pd : pending) locate(plans_[pd.plan], turn, whole, pd.first_mention, pd.args);
    provider_act();
  }

  void seeker_reply() {
    if (request_) {
      auto [i, arg] = *request_;
      request_.reset();
      ApiPlan& p = plans_[i];
      const ArgumentSpec* spec = p.sig->find_argument(arg);
      RealizedUtterance u = realize_nlg(supply_act(spec->type), {{spec->type, vertex_value(p.sources.at(arg))}},
                                        schema_.seeker_templates, rng_, variation_.paraphrase_prob);
      const int turn = begin_turn(u, {supply_act(spec->type)});
      locate(p, turn, u, 0, {arg});
    } else if (confirm_) {
      const int i = *confirm_;
      confirm_.reset();
      ApiPlan& p = plans_[i];
      const ArgumentSpec* conf = confirmation_argument(*p.sig);
      RealizedUtterance u = realize_nlg(kConfirmAct, {{conf->type, vertex_value(p.sources.at(conf->name))}},
                                        schema_.seeker_templates, rng_, variation_.paraphrase_prob);
      const int turn = begin_turn(u, {std::string(kConfirmAct)});
      locate(p, turn, u, 0, {conf->name});
    } else {
      throw Error(ErrorCode::kDeadlock, "seeker has nothing to say while the provider waits");
    }
    provider_act();
  }

  const ArgumentSpec* confirmation_argument(const ActionSignature& sig) const {
    for (const auto& a : sig.arguments) {
      if (is_confirmation_type(a.type)) return &a;
    }
    return nullptr;
  }

  ArgumentBinding entity_binding(const Located& l) const {
    return ArgumentBinding::seeker_entity(l.turn, l.start, l.end, l.value);
  }

  void provider_act() {
    while (next_ < plans_.size()) {
      ApiPlan& p = plans_[next_];
      const ActionSignature& sig = *p.sig;
      for (const auto& a : sig.arguments) {
        if (is_slot_type(a.type) && p.sources.count(a.name) && !p.located.count(a.name)) {
          emit_nlg(request_action(a.type));
          emit_sys(kWaitForUserInput);
          request_ = std::make_pair(static_cast<int>(next_), a.name);
          return;
        }
      }
      const ArgumentSpec* conf = confirmation_argument(sig);
      if (conf != nullptr && p.sources.count(conf->name) && !p.located.count(conf->name)) {
        const ActionSignature* get_all = retrieve_all_api();
        if (sig.kb.op == KbOp::kDeleteAll && get_all != nullptr) {
          call(*get_all, {}, {});
        } else {
          std::map<std::string, ArgumentBinding> nargs;
          if (const ActionSignature* csig = schema_.find_signature(confirm_action(sig.name))) {
            for (const auto& na : csig->arguments) {
              for (const auto& [arg, loc] : p.located) {
                if (sig.find_argument(arg)->type == na.type) nargs[na.name] = entity_binding(loc);
              }
            }
          }
          emit_nlg(confirm_action(sig.name), std::move(nargs));
        }
        emit_sys(kWaitForUserInput);
        confirm_ = static_cast<int>(next_);
        return;
      }

      std::map<std::string, ArgumentBinding> args;
      std::map<std::string, std::string> values;
      for (const auto& a : sig.arguments) {
        auto src = p.sources.find(a.name);
        if (src == p.sources.end()) continue;
        const GoalVertex& v = goal_.vertices[src->second];
        if (v.kind == GoalVertex::Kind::kApiCall) {
          args[a.name] = ArgumentBinding::api_result(handles_.at(src->second));
        } else {
          auto loc = p.located.find(a.name);
          if (loc == p.located.end()) {
            throw Error(ErrorCode::kDeadlock, "argument '" + sig.name + "." + a.name + "' was never supplied");
          }
          args[a.name] = entity_binding(loc->second);
          values[a.name] = loc->second.value;
        }
      }
      handles_[p.vertex] = call(sig, std::move(args), values);
      ++next_;
    }
    emit_sys(kEndDialogue);
  }

  const EntityTransferGraph& goal_;
  const SeekerPolicy& seeker_;
  const ProviderPolicy& provider_;
  const DomainSchema& schema_;
  const VariationConfig& variation_;
  Rng& rng_;

  Dialogue dialogue_;
  std::vector<ApiPlan> plans_;
  std::set<std::pair<int, std::string>> withheld_;
  Event event_ = Event::kNone;
  KbModel kb_;
  std::map<std::string, int> handle_counter_;
  std::map<int, std::string> handles_;
  std::size_t next_ = 0;
  std::optional<std::pair<int, std::string>> request_;
  std::optional<int> confirm_;
  bool ended_ = false;
};

}  // namespace

Dialogue run_interaction(const EntityTransferGraph& goal, const SeekerPolicy& seeker, const ProviderPolicy& provider,
                         const DomainSchema& schema, const VariationConfig& variation, Rng& rng) {
  return Interaction(goal, seeker, provider, schema, variation, rng).run();
}

}  // namespace pref_teach
