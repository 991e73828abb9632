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

#include "pref_teach/service.h"

#include <httplib.h>

#include <algorithm>
#include <vector>

#include "pref_teach/corpus.h"
#include "pref_teach/error.h"

namespace pref_teach {
namespace {

void reply(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void fail(httplib::Response& res, int status, const std::string& message) {
  reply(res, status, {{"error", message}});
}

// Parses a JSON object body; on failure answers 400 and returns nullopt.
std::optional<nlohmann::json> object_body(const httplib::Request& req, httplib::Response& res) {
  nlohmann::json j = nlohmann::json::parse(req.body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    fail(res, 400, "body must be a JSON object");
    return std::nullopt;
  }
  return j;
}

nlohmann::json records_json(const std::vector<PreferenceRecord>& records) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : records) arr.push_back(r.to_json());
  return arr;
}

}  // namespace

ServiceConfig ServiceConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorCode::kParse, "service config must be an object");
  ServiceConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "host") {
      c.host = value.get<std::string>();
    } else if (key == "port") {
      c.port = value.get<int>();
    } else if (key == "schema_path") {
      c.schema_path = value.get<std::string>();
    } else if (key == "bundle_path") {
      c.bundle_path = value.get<std::string>();
    } else if (key == "kb_path") {
      c.kb_path = value.get<std::string>();
    } else if (key == "max_sessions") {
      c.max_sessions = value.get<std::size_t>();
    } else if (key == "idle_timeout_seconds") {
      c.idle_timeout = std::chrono::seconds(value.get<long>());
    } else {
      throw Error(ErrorCode::kParse, "unknown service config key '" + key + "'");
    }
  }
  return c;
}

nlohmann::json ServiceConfig::to_json() const {
  return {{"host", host},
          {"port", port},
          {"schema_path", schema_path.string()},
          {"bundle_path", bundle_path.string()},
          {"kb_path", kb_path.string()},
          {"max_sessions", max_sessions},
          {"idle_timeout_seconds", idle_timeout.count()}};
}

Service::Service(const DomainSchema& schema, const ModelBundle& bundle, PreferenceKb& kb, ServiceConfig config,
                 ManagerConfig manager)
    : schema_(schema),
      bundle_(bundle),
      kb_(kb),
      config_(std::move(config)),
      manager_(schema, kb, manager),
      server_(std::make_unique<httplib::Server>()) {
  bundle_.check_schema(schema_);
  install_routes();
}

Service::~Service() { stop(); }

int Service::bind() {
  if (config_.port == 0) return server_->bind_to_any_port(config_.host);
  return server_->bind_to_port(config_.host, config_.port) ? config_.port : -1;
}

bool Service::listen_after_bind() { return server_->listen_after_bind(); }

void Service::stop() {
  if (server_ && server_->is_running()) server_->stop();
}

void Service::wait_until_ready() const { server_->wait_until_ready(); }

std::size_t Service::session_count() const {
  std::lock_guard lock(sessions_mu_);
  return sessions_.size();
}

std::shared_ptr<Service::Session> Service::find(const std::string& id) const {
  std::lock_guard lock(sessions_mu_);
  auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

void Service::evict_idle() {
  const auto now = std::chrono::steady_clock::now();
  std::lock_guard lock(sessions_mu_);
  std::erase_if(sessions_, [&](auto& kv) {
    std::unique_lock s(kv.second->mu, std::try_to_lock);
    return s.owns_lock() && now - kv.second->last_used > config_.idle_timeout;
  });
}

void Service::install_routes() {
  httplib::Server& srv = *server_;
  srv.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                           {"Access-Control-Allow-Headers", "Content-Type"},
                           {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
  srv.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

  srv.Get("/api/health", [this](const httplib::Request&, httplib::Response& res) {
    char fp[17];
    std::snprintf(fp, sizeof fp, "%016llx", static_cast<unsigned long long>(bundle_.fingerprint()));
    reply(res, 200, {{"status", "ok"}, {"schema", schema_.name}, {"fingerprint", fp}, {"sessions", session_count()}});
  });

  srv.Post("/api/session", [this](const httplib::Request& req, httplib::Response& res) {
    auto body = object_body(req, res);
    if (!body) return;
    if (!body->contains("user_id") || !(*body)["user_id"].is_string() || (*body)["user_id"].get<std::string>().empty()) {
      fail(res, 400, "user_id must be a non-empty string");
      return;
    }
    evict_idle();
    auto session = std::make_shared<Session>();
    session->state = manager_.open_session((*body)["user_id"].get<std::string>());
    session->last_used = std::chrono::steady_clock::now();
    const std::string id = session->state.session_id;
    {
      std::lock_guard lock(sessions_mu_);
      if (sessions_.size() >= config_.max_sessions) {
        fail(res, 503, "session limit reached");
        return;
      }
      sessions_.emplace(id, session);
    }
    reply(res, 200,
          {{"session_id", id}, {"user_id", session->state.user_id}, {"phase", phase_name(session->state.phase)}});
  });

  srv.Post(R"(/api/session/([^/]+)/utterance)", [this](const httplib::Request& req, httplib::Response& res) {
    auto session = find(req.matches[1]);
    if (!session) {
      fail(res, 404, "unknown session");
      return;
    }
    auto body = object_body(req, res);
    if (!body) return;
    if (!body->contains("text") || !(*body)["text"].is_string()) {
      fail(res, 400, "text must be a string");
      return;
    }
    std::unique_lock lock(session->mu, std::try_to_lock);
    if (!lock.owns_lock()) {
      fail(res, 409, "session is busy");
      return;
    }
    if (session->state.phase != Phase::kAwaitUser) {
      fail(res, 409, "session is " + std::string(phase_name(session->state.phase)));
      return;
    }
    session->last_used = std::chrono::steady_clock::now();
    if (turn_hook_) turn_hook_(session->state.session_id);
    try {
      const auto steps = manager_.handle_utterance(session->state, (*body)["text"].get<std::string>(), bundle_);
      nlohmann::json arr = nlohmann::json::array();
      for (const auto& s : steps) arr.push_back(s.to_json());
      reply(res, 200, {{"agent_steps", arr}, {"phase", phase_name(session->state.phase)}});
    } catch (const Error& e) {
      fail(res, 500, e.what());
    }
  });

  srv.Get(R"(/api/session/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    auto session = find(req.matches[1]);
    if (!session) {
      fail(res, 404, "unknown session");
      return;
    }
    std::lock_guard lock(session->mu);
    reply(res, 200,
          {{"session_id", session->state.session_id},
           {"user_id", session->state.user_id},
           {"phase", phase_name(session->state.phase)},
           {"transcript", dialogue_to_json(session->state.transcript)}});
  });

  srv.Get(R"(/api/preferences/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    reply(res, 200, records_json(kb_.retrieve(req.matches[1])));
  });

  srv.Post(R"(/api/preferences/([^/]+)/reset)", [this](const httplib::Request& req, httplib::Response& res) {
    auto body = object_body(req, res);
    if (!body) return;
    if (!body->contains("confirm") || !(*body)["confirm"].is_boolean()) {
      fail(res, 400, "confirm must be a boolean");
      return;
    }
    const bool confirm = (*body)["confirm"].get<bool>();
    int deleted = 0;
    try {
      if (confirm) deleted = kb_.update(req.matches[1], {PreferenceDelta::delete_all()});
    } catch (const Error& e) {
      fail(res, 500, e.what());
      return;
    }
    reply(res, 200, {{"deleted", deleted}, {"confirmed", confirm}});
  });
}

}  // namespace pref_teach
