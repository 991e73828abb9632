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

#include "pref_teach/preference_kb.h"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>

#include "pref_teach/error.h"

namespace pref_teach {
namespace {

constexpr std::string_view kSnapshotFormat = "pref-teach-kb";
constexpr int kSnapshotVersion = 1;

std::string_view op_name(DeltaOp op) {
  switch (op) {
    case DeltaOp::kUpsert:
      return "upsert";
    case DeltaOp::kDelete:
      return "delete";
    case DeltaOp::kDeleteAll:
      return "delete_all";
  }
  return "upsert";
}

DeltaOp parse_op(const std::string& s) {
  if (s == "upsert") return DeltaOp::kUpsert;
  if (s == "delete") return DeltaOp::kDelete;
  if (s == "delete_all") return DeltaOp::kDeleteAll;
  throw Error(ErrorCode::kParse, "unknown kb op '" + s + "'");
}

[[noreturn]] void io_error(const std::string& what, const std::filesystem::path& p) {
  throw Error(ErrorCode::kStorageIo, what + " " + p.string() + ": " + std::strerror(errno));
}

void write_all(int fd, const std::string& data, const std::filesystem::path& p) {
  const char* ptr = data.data();
  std::size_t left = data.size();
  while (left > 0) {
    const ssize_t n = ::write(fd, ptr, left);
    if (n < 0) {
      if (errno == EINTR) continue;
      io_error("write", p);
    }
    ptr += n;
    left -= static_cast<std::size_t>(n);
  }
}

void sync_dir(const std::filesystem::path& file) {
  const auto dir = file.has_parent_path() ? file.parent_path() : std::filesystem::path(".");
  const int fd = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY);
  if (fd < 0) return;
  ::fsync(fd);
  ::close(fd);
}

}  // namespace

nlohmann::json PreferenceRecord::to_json() const {
  nlohmann::json j = {{"user_id", user_id},
                      {"domain", domain},
                      {"entity_type", entity_type},
                      {"entity_value", entity_value},
                      {"polarity", polarity_name(polarity)},
                      {"updated_at", updated_at}};
  j["condition"] = condition ? nlohmann::json(*condition) : nlohmann::json(nullptr);
  return j;
}

PreferenceRecord PreferenceRecord::from_json(const nlohmann::json& j) {
  PreferenceRecord r;
  r.user_id = j.value("user_id", std::string());
  r.domain = j.value("domain", std::string());
  r.entity_type = j.value("entity_type", std::string());
  r.entity_value = j.value("entity_value", std::string());
  const auto pol = parse_polarity(j.value("polarity", std::string("like")));
  if (!pol) throw Error(ErrorCode::kParse, "bad polarity in preference record");
  r.polarity = *pol;
  if (j.contains("condition") && !j.at("condition").is_null()) r.condition = j.at("condition").get<std::string>();
  r.updated_at = j.value("updated_at", std::uint64_t{0});
  return r;
}

PreferenceDelta PreferenceDelta::upsert(std::string domain, std::string entity_type, std::string value,
                                        Polarity polarity, std::optional<std::string> condition) {
  PreferenceDelta d;
  d.op = DeltaOp::kUpsert;
  d.record.domain = std::move(domain);
  d.record.entity_type = std::move(entity_type);
  d.record.entity_value = std::move(value);
  d.record.polarity = polarity;
  d.record.condition = std::move(condition);
  return d;
}

PreferenceDelta PreferenceDelta::remove(std::string domain, std::string entity_type, std::string value,
                                        std::optional<std::string> condition) {
  PreferenceDelta d = upsert(std::move(domain), std::move(entity_type), std::move(value), Polarity::kLike,
                             std::move(condition));
  d.op = DeltaOp::kDelete;
  return d;
}

PreferenceDelta PreferenceDelta::delete_all() {
  PreferenceDelta d;
  d.op = DeltaOp::kDeleteAll;
  return d;
}

nlohmann::json PreferenceDelta::to_json() const {
  nlohmann::json j = {{"op", op_name(op)}};
  if (op != DeltaOp::kDeleteAll) j["record"] = record.to_json();
  return j;
}

PreferenceDelta PreferenceDelta::from_json(const nlohmann::json& j) {
  PreferenceDelta d;
  d.op = parse_op(j.at("op").get<std::string>());
  if (j.contains("record")) d.record = PreferenceRecord::from_json(j.at("record"));
  return d;
}

PreferenceKb::PreferenceKb(std::filesystem::path path, KbOptions options)
    : path_(std::move(path)), options_(std::move(options)) {
  if (path_.empty()) return;
  load();
  log_fd_ = ::open(log_path().c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (log_fd_ < 0) io_error("cannot open log", log_path());
}

PreferenceKb::~PreferenceKb() {
  if (log_fd_ >= 0) ::close(log_fd_);
}

std::filesystem::path PreferenceKb::log_path() const {
  std::filesystem::path p = path_;
  p += ".log";
  return p;
}

PreferenceKb::Key PreferenceKb::key_of(const PreferenceRecord& r) {
  return {r.domain, r.entity_type, r.entity_value, r.condition.value_or(""), r.condition.has_value()};
}

std::shared_ptr<PreferenceKb::Shard> PreferenceKb::shard(const std::string& user_id, bool create) const {
  {
    std::shared_lock lock(shards_mu_);
    auto it = shards_.find(user_id);
    if (it != shards_.end()) return it->second;
  }
  if (!create) return nullptr;
  std::unique_lock lock(shards_mu_);
  auto& s = shards_[user_id];
  if (!s) s = std::make_shared<Shard>();
  return s;
}

int PreferenceKb::apply(std::map<Key, PreferenceRecord>& records, const std::string& user_id,
                        const std::vector<PreferenceDelta>& deltas, std::uint64_t& clock) {
  int applied = 0;
  for (const auto& d : deltas) {
    switch (d.op) {
      case DeltaOp::kUpsert: {
        PreferenceRecord r = d.record;
        r.user_id = user_id;
        clock = std::max(clock, r.updated_at);
        records[key_of(r)] = std::move(r);
        ++applied;
        break;
      }
      case DeltaOp::kDelete: {
        const auto& q = d.record;
        applied += static_cast<int>(std::erase_if(records, [&](const auto& kv) {
          const PreferenceRecord& r = kv.second;
          return r.domain == q.domain && r.entity_type == q.entity_type && r.entity_value == q.entity_value &&
                 (!q.condition || r.condition == q.condition);
        }));
        break;
      }
      case DeltaOp::kDeleteAll:
        applied += static_cast<int>(records.size());
        records.clear();
        break;
    }
  }
  return applied;
}

int PreferenceKb::update(const std::string& user_id, const std::vector<PreferenceDelta>& deltas) {
  for (const auto& d : deltas) {
    if (d.op == DeltaOp::kDeleteAll || options_.entity_types.empty()) continue;
    if (options_.entity_types.count(d.record.entity_type) == 0) {
      throw Error(ErrorCode::kUnknownEntityType, "unknown entity type '" + d.record.entity_type + "'");
    }
  }
  std::shared_ptr<Shard> s = shard(user_id, true);
  int applied = 0;
  {
    std::unique_lock lock(s->mu);
    std::vector<PreferenceDelta> stamped = deltas;
    for (auto& d : stamped) {
      if (d.op == DeltaOp::kUpsert) d.record.updated_at = ++clock_;
    }
    std::map<Key, PreferenceRecord> next = s->records;
    std::uint64_t unused = 0;
    applied = apply(next, user_id, stamped, unused);
    if (log_fd_ >= 0) {
      nlohmann::json entry = {{"user_id", user_id}, {"deltas", nlohmann::json::array()}};
      for (const auto& d : stamped) entry["deltas"].push_back(d.to_json());
      append_log(entry.dump() + "\n");
    }
    s->records = std::move(next);
  }
  maybe_compact();
  return applied;
}

void PreferenceKb::append_log(const std::string& line) {
  std::lock_guard lock(log_mu_);
  write_all(log_fd_, line, log_path());
  if (options_.sync && ::fsync(log_fd_) != 0) io_error("fsync", log_path());
  ++log_entries_;
}

std::vector<PreferenceRecord> PreferenceKb::retrieve(const std::string& user_id, const RetrieveFilter& filter) const {
  std::vector<PreferenceRecord> out;
  std::shared_ptr<Shard> s = shard(user_id, false);
  if (!s) return out;
  {
    std::shared_lock lock(s->mu);
    for (const auto& [k, r] : s->records) {
      if (filter.domain && r.domain != *filter.domain) continue;
      if (filter.entity_type && r.entity_type != *filter.entity_type) continue;
      out.push_back(r);
    }
  }
  std::sort(out.begin(), out.end(), [](const PreferenceRecord& a, const PreferenceRecord& b) {
    return std::tie(a.domain, a.entity_type, a.updated_at, a.entity_value) <
           std::tie(b.domain, b.entity_type, b.updated_at, b.entity_value);
  });
  return out;
}

std::vector<std::string> PreferenceKb::users() const {
  std::vector<std::string> out;
  std::shared_lock lock(shards_mu_);
  for (const auto& [user, s] : shards_) {
    std::shared_lock sl(s->mu);
    if (!s->records.empty()) out.push_back(user);
  }
  return out;
}

std::size_t PreferenceKb::log_entries() const { return log_entries_.load(); }

void PreferenceKb::maybe_compact() {
  if (log_fd_ < 0 || options_.compact_every == 0 || log_entries_.load() < options_.compact_every) return;
  compact();
}

void PreferenceKb::compact() {
  if (path_.empty()) return;
  // Lock order: shard map, shards (in key order), log. Writers take a shard
  // then the log, so this never inverts.
  std::unique_lock map_lock(shards_mu_);
  std::vector<std::unique_lock<std::shared_mutex>> shard_locks;
  for (auto& [user, s] : shards_) shard_locks.emplace_back(s->mu);
  std::lock_guard log_lock(log_mu_);
  write_snapshot();
  if (::ftruncate(log_fd_, 0) != 0) io_error("truncate", log_path());
  if (options_.sync) ::fsync(log_fd_);
  log_entries_ = 0;
}

void PreferenceKb::write_snapshot() {
  nlohmann::json records = nlohmann::json::array();
  for (const auto& [user, s] : shards_) {
    for (const auto& [k, r] : s->records) records.push_back(r.to_json());
  }
  const nlohmann::json snap = {
      {"format", kSnapshotFormat}, {"version", kSnapshotVersion}, {"clock", clock_.load()}, {"records", records}};
  std::filesystem::path tmp = path_;
  tmp += ".tmp";
  const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
  if (fd < 0) io_error("cannot write snapshot", tmp);
  try {
    write_all(fd, snap.dump(2) + "\n", tmp);
  } catch (...) {
    ::close(fd);
    throw;
  }
  if (options_.sync) ::fsync(fd);
  ::close(fd);
  std::error_code ec;
  std::filesystem::rename(tmp, path_, ec);
  if (ec) throw Error(ErrorCode::kStorageIo, "rename " + tmp.string() + ": " + ec.message());
  if (options_.sync) sync_dir(path_);
}

void PreferenceKb::load() {
  std::uint64_t clock = 0;
  if (std::filesystem::exists(path_)) {
    std::ifstream in(path_, std::ios::binary);
    if (!in) io_error("cannot read", path_);
    std::stringstream ss;
    ss << in.rdbuf();
    try {
      const auto snap = nlohmann::json::parse(ss.str());
      if (snap.at("format").get<std::string>() != kSnapshotFormat) {
        throw Error(ErrorCode::kStorageIo, path_.string() + " is not a preference snapshot");
      }
      clock = snap.value("clock", std::uint64_t{0});
      for (const auto& rj : snap.at("records")) {
        PreferenceRecord r = PreferenceRecord::from_json(rj);
        clock = std::max(clock, r.updated_at);
        auto& s = shards_[r.user_id];
        if (!s) s = std::make_shared<Shard>();
        s->records[key_of(r)] = std::move(r);
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kStorageIo, "corrupt snapshot " + path_.string() + ": " + e.what());
    }
  }
  const auto log = log_path();
  if (std::filesystem::exists(log)) {
    std::ifstream in(log, std::ios::binary);
    if (!in) io_error("cannot read", log);
    std::stringstream ss;
    ss << in.rdbuf();
    const std::string text = ss.str();
    std::size_t pos = 0;
    int line_no = 0;
    std::size_t entries = 0;
    while (pos < text.size()) {
      const std::size_t nl = text.find('\n', pos);
      ++line_no;
      // A final line without its newline is an interrupted append: it was
      // never acknowledged, so it is dropped.
      if (nl == std::string::npos) {
        std::filesystem::resize_file(log, pos);
        break;
      }
      const std::string line = text.substr(pos, nl - pos);
      pos = nl + 1;
      if (line.empty()) continue;
      try {
        const auto entry = nlohmann::json::parse(line);
        const std::string user = entry.at("user_id").get<std::string>();
        std::vector<PreferenceDelta> deltas;
        for (const auto& dj : entry.at("deltas")) deltas.push_back(PreferenceDelta::from_json(dj));
        auto& s = shards_[user];
        if (!s) s = std::make_shared<Shard>();
        apply(s->records, user, deltas, clock);
        ++entries;
      } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::kStorageIo, log.string() + ":" + std::to_string(line_no) + ": " + e.what());
      }
    }
    log_entries_ = entries;
  }
  clock_ = clock;
}

}  // namespace pref_teach
