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

// pref-teach command line: simulate, train, eval, kb, serve, chat, experiment.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "pref_teach/chat.h"
#include "pref_teach/corpus.h"
#include "pref_teach/error.h"
#include "pref_teach/eval.h"
#include "pref_teach/manager.h"
#include "pref_teach/preference_kb.h"
#include "pref_teach/service.h"
#include "pref_teach/simulator.h"
#include "pref_teach/trainer.h"

namespace pt = pref_teach;

namespace {

const pt::DomainSchema& schema_from(const std::string& path) {
  static std::optional<pt::DomainSchema> loaded;
  if (path.empty()) return pt::default_schema();
  if (!loaded) loaded = pt::load_schema(path);
  return *loaded;
}

pt::KbOptions kb_options(const pt::DomainSchema& schema) {
  pt::KbOptions o;
  for (const auto& t : schema.entity_types) o.entity_types.insert(t.name);
  return o;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw pt::Error(pt::ErrorCode::kStorageIo, "cannot write " + path.string());
  out << text;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Teach and reuse user preferences through dialogue"};
  app.require_subcommand(1);

  // simulate
  std::string sim_schema, sim_out;
  int sim_n = 2000;
  std::uint64_t sim_seed = 1;
  double sim_error = 0.1;
  int sim_threads = 0;
  auto* simulate = app.add_subcommand("simulate", "Generate an annotated dialogue corpus");
  simulate->add_option("--schema", sim_schema, "Schema file (default: bundled schema)");
  simulate->add_option("--n", sim_n, "Number of dialogues")->check(CLI::PositiveNumber);
  simulate->add_option("--seed", sim_seed, "Random seed");
  simulate->add_option("--out", sim_out, "Output corpus (JSON lines)")->required();
  simulate->add_option("--error-rate", sim_error, "Probability of injecting a seeker error event")
      ->check(CLI::Range(0.0, 1.0));
  simulate->add_option("--threads", sim_threads, "Worker threads (0 = all cores)");

  // train
  std::string tr_corpus, tr_schema, tr_out, tr_cf = "on";
  pt::TrainConfig tr;
  auto* train = app.add_subcommand("train", "Train NER, action prediction and argument filling jointly");
  train->add_option("--corpus", tr_corpus, "Training corpus")->required();
  train->add_option("--schema", tr_schema, "Schema file (default: bundled schema)");
  train->add_option("--epochs", tr.epochs, "Epochs")->check(CLI::NonNegativeNumber);
  train->add_option("--lr", tr.lr, "Adam learning rate");
  train->add_option("--batch", tr.batch, "Dialogues per step")->check(CLI::PositiveNumber);
  train->add_option("--seed", tr.seed, "Random seed");
  train->add_option("--d", tr.model.d, "Embedding width");
  train->add_option("--catalog-features", tr_cf, "Catalog n-gram features")->check(CLI::IsMember({"on", "off"}));
  train->add_option("--out", tr_out, "Output bundle")->required();

  // eval
  std::string ev_bundle, ev_corpus, ev_schema, ev_report;
  bool ev_success = false;
  auto* eval = app.add_subcommand("eval", "Teacher-forced accuracy report");
  eval->add_option("--bundle", ev_bundle, "Model bundle")->required();
  eval->add_option("--corpus", ev_corpus, "Evaluation corpus")->required();
  eval->add_option("--schema", ev_schema, "Schema file (default: bundled schema)");
  eval->add_option("--report", ev_report, "Write the JSON report here and the table next to it (.txt)");
  eval->add_flag("--success", ev_success, "Also measure free-running success");

  // kb
  std::string kb_path, kb_user, kb_schema;
  auto* kb = app.add_subcommand("kb", "Inspect the preference store");
  kb->require_subcommand(1);
  auto* kb_dump = kb->add_subcommand("dump", "Print stored preferences as JSON");
  kb_dump->add_option("--kb", kb_path, "KB snapshot path")->required();
  kb_dump->add_option("--user", kb_user, "Only this user");
  auto* kb_compact = kb->add_subcommand("compact", "Fold the log into the snapshot");
  kb_compact->add_option("--kb", kb_path, "KB snapshot path")->required();

  // serve
  std::string sv_config;
  pt::ServiceConfig sv;
  std::string sv_schema, sv_bundle, sv_kb;
  long sv_idle = -1;
  auto* serve = app.add_subcommand("serve", "Run the HTTP session service");
  serve->add_option("--config", sv_config, "JSON service config (env PREF_TEACH_CONFIG)");
  serve->add_option("--schema", sv_schema, "Schema file");
  serve->add_option("--bundle", sv_bundle, "Model bundle");
  serve->add_option("--kb", sv_kb, "KB snapshot path");
  serve->add_option("--host", sv.host, "Bind address");
  serve->add_option("--port", sv.port, "Port (0 = any)");
  serve->add_option("--max-sessions", sv.max_sessions, "Live session cap");
  serve->add_option("--idle-timeout", sv_idle, "Idle session eviction, seconds");

  // chat
  std::string ch_schema, ch_bundle, ch_kb, ch_transcript;
  pt::ChatOptions ch;
  bool ch_quiet = false;
  auto* chat = app.add_subcommand("chat", "Interactive teaching session on the terminal");
  chat->add_option("--schema", ch_schema, "Schema file (default: bundled schema)");
  chat->add_option("--bundle", ch_bundle, "Model bundle")->required();
  chat->add_option("--kb", ch_kb, "KB snapshot path (default: in memory)");
  chat->add_option("--user", ch.user_id, "User id");
  chat->add_option("--transcript", ch_transcript, "Append finished sessions here (corpus format)");
  chat->add_flag("--quiet", ch_quiet, "Only print agent lines");

  // experiment
  std::string ex_schema, ex_dir = "experiment";
  pt::EvalSetConfig ex_sets;
  pt::TrainConfig ex_train;
  bool ex_no_ablation = false;
  auto* experiment = app.add_subcommand("experiment", "Build eval sets, train, evaluate and run the ablation");
  experiment->add_option("--schema", ex_schema, "Schema file (default: bundled schema)");
  experiment->add_option("--out-dir", ex_dir, "Output directory");
  experiment->add_option("--n-train", ex_sets.n_train, "Training dialogues");
  experiment->add_option("--n-eval", ex_sets.n_in_sample, "Dialogues per evaluation set");
  experiment->add_option("--epochs", ex_train.epochs, "Epochs");
  experiment->add_option("--seed", ex_sets.seed, "Random seed");
  experiment->add_flag("--no-ablation", ex_no_ablation, "Skip the catalog-feature ablation");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*simulate) {
      const auto& schema = schema_from(sim_schema);
      pt::CorpusConfig cc;
      cc.n_dialogues = sim_n;
      cc.seed = sim_seed;
      cc.threads = sim_threads;
      cc.variation.error_injection_rate = sim_error;
      const auto tm = pt::estimate_transitions(schema.seed_dialogues, cc.variation.mixing, schema);
      const auto corpus = pt::generate_corpus(schema, cc, tm);
      pt::write_corpus(sim_out, corpus);
      std::cout << pt::format_stats_table({{std::filesystem::path(sim_out).filename().string(), pt::corpus_stats(corpus)}});
      return 0;
    }
    if (*train) {
      const auto& schema = schema_from(tr_schema);
      const auto corpus = pt::read_corpus(tr_corpus);
      tr.model.catalog_features = tr_cf == "on";
      const auto t0 = std::chrono::steady_clock::now();
      tr.on_epoch = [&](int epoch, double loss) {
        std::printf("epoch %3d  loss %.4f  (%.1fs)\n", epoch, loss, seconds_since(t0));
        std::fflush(stdout);
      };
      const auto result = pt::train(corpus, schema, tr);
      result.bundle.save(tr_out);
      std::printf("initial loss %.4f; bundle written to %s\n", result.loss_curve.front(), tr_out.c_str());
      return 0;
    }
    if (*eval) {
      const auto& schema = schema_from(ev_schema);
      const auto bundle = pt::ModelBundle::load(ev_bundle);
      const auto corpus = pt::read_corpus(ev_corpus);
      auto report = pt::evaluate(corpus, bundle, schema);
      if (ev_success) report.success_rate = pt::free_running_success(corpus, bundle, schema);
      const std::string table =
          pt::format_stats_table({{"corpus", report.stats}}) + "\n" + report.format_table("accuracy");
      std::cout << table;
      if (!ev_report.empty()) {
        write_text(ev_report, report.to_json().dump(2) + "\n");
        write_text(ev_report + ".txt", table);
      }
      return 0;
    }
    if (*kb) {
      pt::PreferenceKb store(kb_path);
      if (*kb_compact) {
        store.compact();
        std::cout << "compacted " << kb_path << "\n";
        return 0;
      }
      nlohmann::json out = nlohmann::json::object();
      const std::vector<std::string> users = kb_user.empty() ? store.users() : std::vector<std::string>{kb_user};
      for (const auto& u : users) {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& r : store.retrieve(u)) arr.push_back(r.to_json());
        out[u] = arr;
      }
      std::cout << out.dump(2) << "\n";
      return 0;
    }
    if (*serve) {
      if (sv_config.empty()) {
        if (const char* env = std::getenv("PREF_TEACH_CONFIG")) sv_config = env;
      }
      pt::ServiceConfig cfg = sv;
      if (!sv_config.empty()) {
        std::ifstream in(sv_config);
        if (!in) throw pt::Error(pt::ErrorCode::kStorageIo, "cannot read " + sv_config);
        cfg = pt::ServiceConfig::from_json(nlohmann::json::parse(in));
        if (serve->count("--host")) cfg.host = sv.host;
        if (serve->count("--port")) cfg.port = sv.port;
        if (serve->count("--max-sessions")) cfg.max_sessions = sv.max_sessions;
      }
      if (!sv_schema.empty()) cfg.schema_path = sv_schema;
      if (!sv_bundle.empty()) cfg.bundle_path = sv_bundle;
      if (!sv_kb.empty()) cfg.kb_path = sv_kb;
      if (sv_idle >= 0) cfg.idle_timeout = std::chrono::seconds(sv_idle);
      if (cfg.bundle_path.empty()) throw pt::Error(pt::ErrorCode::kInvalidArgument, "serve needs --bundle");
      const auto& schema = schema_from(cfg.schema_path.string());
      const auto bundle = pt::ModelBundle::load(cfg.bundle_path);
      pt::PreferenceKb store(cfg.kb_path, kb_options(schema));
      pt::Service service(schema, bundle, store, cfg);
      const int port = service.bind();
      if (port < 0) throw pt::Error(pt::ErrorCode::kStorageIo, "cannot bind " + cfg.host);
      std::printf("listening on http://%s:%d\n", cfg.host.c_str(), port);
      std::fflush(stdout);
      return service.listen_after_bind() ? 0 : 1;
    }
    if (*chat) {
      const auto& schema = schema_from(ch_schema);
      const auto bundle = pt::ModelBundle::load(ch_bundle);
      bundle.check_schema(schema);
      pt::PreferenceKb store(ch_kb, kb_options(schema));
      pt::DialogueManager manager(schema, store);
      ch.trace = !ch_quiet;
      ch.transcript_path = ch_transcript;
      pt::run_chat(std::cin, std::cout, manager, bundle, store, ch);
      return 0;
    }
    if (*experiment) {
      const auto& schema = schema_from(ex_schema);
      ex_sets.n_out_of_sample = ex_sets.n_in_sample;
      std::filesystem::create_directories(ex_dir);
      const std::filesystem::path dir(ex_dir);
      const auto t0 = std::chrono::steady_clock::now();
      const auto sets = pt::build_eval_sets(schema, ex_sets);
      pt::write_corpus(dir / "train.jsonl", sets.train);
      pt::write_corpus(dir / "in_sample.jsonl", sets.in_sample);
      pt::write_corpus(dir / "out_of_sample.jsonl", sets.out_of_sample);
      std::ostringstream text;
      text << sets.stats_table() << "\n";
      std::printf("%s", text.str().c_str());
      ex_train.on_epoch = [&](int epoch, double loss) {
        std::printf("epoch %3d  loss %.4f  (%.1fs)\n", epoch, loss, seconds_since(t0));
        std::fflush(stdout);
      };
      const auto trained = pt::train(sets.train, schema, ex_train);
      trained.bundle.save(dir / "bundle.json");
      auto in = pt::evaluate(sets.in_sample, trained.bundle, schema);
      in.success_rate = pt::free_running_success(sets.in_sample, trained.bundle, schema);
      auto oos = pt::evaluate(sets.out_of_sample, trained.bundle, schema);
      oos.success_rate = pt::free_running_success(sets.out_of_sample, trained.bundle, schema);
      text << in.format_table("in-sample") << "\n" << oos.format_table("out-of-sample") << "\n";
      nlohmann::json record = {{"in_sample", in.to_json()},
                               {"out_of_sample", oos.to_json()},
                               {"unseen_entity_fraction", pt::unseen_entity_fraction(sets.train, sets.out_of_sample)}};
      if (!ex_no_ablation) {
        pt::TrainConfig off = ex_train;
        off.model.catalog_features = false;
        off.on_epoch = nullptr;
        const auto plain = pt::train(sets.train, schema, off);
        pt::AblationResult ab;
        ab.with_features = oos;
        ab.without_features = pt::evaluate(sets.out_of_sample, plain.bundle, schema);
        ab.config_diff = nlohmann::json::diff(ex_train.model.to_json(), off.model.to_json());
        text << "catalog features (out-of-sample)\n" << ab.format_table();
        record["ablation"] = {{"with", ab.with_features.to_json()},
                              {"without", ab.without_features.to_json()},
                              {"ner_per_turn_delta", ab.ner_per_turn_delta()},
                              {"ner_per_action_delta", ab.ner_per_action_delta()},
                              {"config_diff", ab.config_diff}};
      }
      write_text(dir / "report.json", record.dump(2) + "\n");
      write_text(dir / "report.txt", text.str());
      std::printf("%s(%.1fs)\n", text.str().substr(sets.stats_table().size() + 1).c_str(), seconds_since(t0));
      return 0;
    }
  } catch (const pt::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
