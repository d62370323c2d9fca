#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <memory>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "mmplug/wire.hpp"

namespace mmplug::store {

struct Document {
  std::string doc_id;
  int rev = 1;
  nlohmann::json body;  ///< the reading as received (kind, device, ts_ms, ...)
  std::int64_t server_ts_ms = 0;

  std::string device() const;
  std::string kind() const;
  std::int64_t ts_ms() const;
  nlohmann::json to_json() const;
  bool operator==(const Document& other) const;
};

/// "<device>:<kind>:<ts_ms>"
std::string make_doc_id(const std::string& device, const std::string& kind, std::int64_t ts_ms);

enum class FsyncPolicy { None, EveryPut };

/// Append-only JSON-lines log of document revisions with an in-memory
/// index rebuilt on open. One writer at a time; readers run concurrently
/// and see a consistent prefix of the log.
///
/// Log line: {"doc_id":..., "rev":..., "server_ts_ms":..., "body":{...}}.
/// A torn final line (crash mid-append) is ignored on replay.
class DocumentStore {
 public:
  /// An empty path keeps everything in memory.
  explicit DocumentStore(std::filesystem::path path = {}, FsyncPolicy fsync = FsyncPolicy::None);
  ~DocumentStore();
  DocumentStore(const DocumentStore&) = delete;
  DocumentStore& operator=(const DocumentStore&) = delete;

  /// Appends a revision; a repeated (device, kind, ts) becomes rev + 1.
  /// Throws Error(Io) when the log cannot be written.
  Document put(const wire::Reading& reading, std::int64_t server_ts_ms);
  Document put(const nlohmann::json& body, std::int64_t server_ts_ms);

  /// Latest revision of each reading with t0 <= ts < t1, ordered by ts.
  std::vector<Document> query(const std::string& device, const std::string& kind, std::int64_t t0,
                              std::int64_t t1) const;
  std::vector<Document> revisions(const std::string& doc_id) const;
  /// Latest revision of every document, ordered by (device, kind, ts).
  std::vector<Document> all_latest() const;

  std::size_t document_count() const;
  std::size_t revision_count() const;
  std::vector<std::string> devices() const;
  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  void index(Document doc);

  std::filesystem::path path_;
  FsyncPolicy fsync_;
  std::FILE* log_ = nullptr;
  mutable std::shared_mutex mu_;
  std::unordered_map<std::string, std::vector<Document>> revs_;
  // (device, kind) -> ts -> doc_id
  std::map<std::pair<std::string, std::string>, std::map<std::int64_t, std::string>> by_time_;
  std::size_t revision_count_ = 0;
};

}  // namespace mmplug::store
