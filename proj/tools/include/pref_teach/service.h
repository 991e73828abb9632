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

#ifndef PREF_TEACH_SERVICE_H_
#define PREF_TEACH_SERVICE_H_

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>

#include <nlohmann/json.hpp>

#include "pref_teach/manager.h"
#include "pref_teach/model.h"
#include "pref_teach/preference_kb.h"
#include "pref_teach/schema.h"

namespace httplib {
class Server;
}

namespace pref_teach {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  // Empty schema path means the bundled default schema.
  std::filesystem::path schema_path;
  std::filesystem::path bundle_path;
  std::filesystem::path kb_path;
  std::size_t max_sessions = 1024;
  std::chrono::seconds idle_timeout{1800};

  // Keys mirror the field names; unknown keys are rejected.
  static ServiceConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

// HTTP front end for live sessions:
//   POST /api/session                     {user_id}  -> {session_id, user_id, phase}
//   POST /api/session/{id}/utterance      {text}     -> {agent_steps, phase}
//   GET  /api/session/{id}                           -> {session_id, user_id, phase, transcript}
//   GET  /api/preferences/{user_id}                  -> [PreferenceRecord]
//   POST /api/preferences/{user_id}/reset {confirm}  -> {deleted, confirmed}
//   GET  /api/health
// 400 malformed body, 404 unknown session, 409 busy or finished session.
class Service {
 public:
  // Throws Error(kSchemaMismatch) when the bundle was trained on a
  // structurally different schema.
  Service(const DomainSchema& schema, const ModelBundle& bundle, PreferenceKb& kb, ServiceConfig config = {},
          ManagerConfig manager = {});
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  // Binds to config.port (0 picks a free port) and returns the bound port,
  // or -1 on failure.
  int bind();
  // Blocks serving requests until stop().
  bool listen_after_bind();
  void stop();
  void wait_until_ready() const;

  std::size_t session_count() const;

  // Runs inside the session lock before each utterance is handled. Set it
  // before bind(); tests use it to hold a session busy.
  using TurnHook = std::function<void(const std::string& session_id)>;
  void set_turn_hook(TurnHook hook) { turn_hook_ = std::move(hook); }
  httplib::Server& server() { return *server_; }

 private:
  struct Session {
    std::mutex mu;
    SessionState state;
    std::chrono::steady_clock::time_point last_used;
  };

  void install_routes();
  std::shared_ptr<Session> find(const std::string& id) const;
  void evict_idle();

  const DomainSchema& schema_;
  const ModelBundle& bundle_;
  PreferenceKb& kb_;
  ServiceConfig config_;
  DialogueManager manager_;
  std::unique_ptr<httplib::Server> server_;
  TurnHook turn_hook_;
  mutable std::mutex sessions_mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
};

}  // namespace pref_teach

#endif  // PREF_TEACH_SERVICE_H_
