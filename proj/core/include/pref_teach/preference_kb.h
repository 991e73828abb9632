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

#ifndef PREF_TEACH_PREFERENCE_KB_H_
#define PREF_TEACH_PREFERENCE_KB_H_

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "pref_teach/domain.h"

namespace pref_teach {

struct PreferenceRecord {
  std::string user_id;
  std::string domain;
  std::string entity_type;
  std::string entity_value;
  Polarity polarity = Polarity::kLike;
  std::optional<std::string> condition;
  // Logical clock; strictly increasing across all committed writes.
  std::uint64_t updated_at = 0;

  nlohmann::json to_json() const;
  static PreferenceRecord from_json(const nlohmann::json& j);
  bool operator==(const PreferenceRecord&) const = default;
};

enum class DeltaOp { kUpsert, kDelete, kDeleteAll };

struct PreferenceDelta {
  DeltaOp op = DeltaOp::kUpsert;
  // Upsert: the record to store. Delete: domain, entity_type, entity_value
  // and (optionally) condition select the records to remove; without a
  // condition every conditional variant goes. Ignored for delete-all.
  PreferenceRecord record;

  static PreferenceDelta upsert(std::string domain, std::string entity_type, std::string value,
                                Polarity polarity = Polarity::kLike, std::optional<std::string> condition = {});
  static PreferenceDelta remove(std::string domain, std::string entity_type, std::string value,
                                std::optional<std::string> condition = {});
  static PreferenceDelta delete_all();

  nlohmann::json to_json() const;
  static PreferenceDelta from_json(const nlohmann::json& j);
};

struct RetrieveFilter {
  std::optional<std::string> domain;
  std::optional<std::string> entity_type;
};

struct KbOptions {
  // Entity types accepted by update(); empty accepts any.
  std::set<std::string> entity_types;
  // Log entries after which the log is folded into the snapshot; 0 never.
  std::size_t compact_every = 256;
  // fsync the log after every committed update.
  bool sync = true;
};

// Keyed preference store. Records are unique on (user, domain, entity
// type, value, condition). With a path, state lives in a JSON snapshot at
// `path` plus an append-only JSON-lines log at `path`.log; every update is
// on the log before update() returns. Without a path the store is memory
// only.
class PreferenceKb {
 public:
  explicit PreferenceKb(std::filesystem::path path = {}, KbOptions options = {});
  ~PreferenceKb();
  PreferenceKb(const PreferenceKb&) = delete;
  PreferenceKb& operator=(const PreferenceKb&) = delete;

  // Atomic per call. Returns the number of records written or removed.
  // Throws Error(kUnknownEntityType) or Error(kStorageIo); on error nothing
  // is applied.
  int update(const std::string& user_id, const std::vector<PreferenceDelta>& deltas);
  // Sorted by (domain, entity_type, updated_at, entity_value).
  std::vector<PreferenceRecord> retrieve(const std::string& user_id, const RetrieveFilter& filter = {}) const;
  std::vector<std::string> users() const;

  // Folds the log into a fresh snapshot and truncates the log.
  void compact();
  std::size_t log_entries() const;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path log_path() const;

 private:
  using Key = std::tuple<std::string, std::string, std::string, std::string, bool>;
  struct Shard {
    mutable std::shared_mutex mu;
    std::map<Key, PreferenceRecord> records;
  };

  static Key key_of(const PreferenceRecord& r);
  std::shared_ptr<Shard> shard(const std::string& user_id, bool create) const;
  static int apply(std::map<Key, PreferenceRecord>& records, const std::string& user_id,
                   const std::vector<PreferenceDelta>& deltas, std::uint64_t& clock);
  void load();
  void append_log(const std::string& line);
  void write_snapshot();
  void maybe_compact();

  std::filesystem::path path_;
  KbOptions options_;
  // Guards the shard map; writers of one user hold only that shard's lock.
  mutable std::shared_mutex shards_mu_;
  mutable std::map<std::string, std::shared_ptr<Shard>> shards_;
  std::atomic<std::uint64_t> clock_{0};
  std::mutex log_mu_;
  int log_fd_ = -1;
  std::atomic<std::size_t> log_entries_{0};
};

}  // namespace pref_teach

#endif  // PREF_TEACH_PREFERENCE_KB_H_
