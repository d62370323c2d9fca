#include "mmplug/store.hpp"

#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <mutex>

#include "mmplug/common.hpp"

namespace mmplug::store {

using nlohmann::json;

std::string Document::device() const { return body.value("device", ""); }
std::string Document::kind() const { return body.value("kind", ""); }
std::int64_t Document::ts_ms() const { return body.value("ts_ms", std::int64_t{0}); }

json Document::to_json() const {
  return {{"doc_id", doc_id}, {"rev", rev}, {"server_ts_ms", server_ts_ms}, {"body", body}};
}

bool Document::operator==(const Document& other) const {
  return doc_id == other.doc_id && rev == other.rev && server_ts_ms == other.server_ts_ms && body == other.body;
}

std::string make_doc_id(const std::string& device, const std::string& kind, std::int64_t ts_ms) {
  return device + ":" + kind + ":" + std::to_string(ts_ms);
}

DocumentStore::DocumentStore(std::filesystem::path path, FsyncPolicy fsync) : path_(std::move(path)), fsync_(fsync) {
  if (path_.empty()) return;
  if (std::filesystem::exists(path_)) {
    std::ifstream in(path_);
    if (!in) throw Error(ErrorCode::Io, "cannot read store log " + path_.string());
    std::string line;
    std::size_t line_no = 0;
    std::uintmax_t valid_end = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) {
        ++valid_end;
        continue;
      }
      const json j = json::parse(line, nullptr, false);
      if (j.is_discarded() || !j.is_object() || !j.contains("doc_id") || !j.contains("rev") || !j.contains("body")) {
        if (in.peek() == EOF) break;  // torn tail from an interrupted append
        throw Error(ErrorCode::Io, "store log " + path_.string() + " corrupt at line " + std::to_string(line_no));
      }
      Document d{j["doc_id"].get<std::string>(), j["rev"].get<int>(), j["body"],
                 j.value("server_ts_ms", std::int64_t{0})};
      const auto it = revs_.find(d.doc_id);
      const int expected = it == revs_.end() ? 1 : static_cast<int>(it->second.size()) + 1;
      if (d.rev != expected) {
        throw Error(ErrorCode::Io, "store log " + path_.string() + ": non-contiguous revision for " + d.doc_id);
      }
      index(std::move(d));
      valid_end += line.size() + 1;
    }
    in.close();
    std::error_code ec;
    const auto size = std::filesystem::file_size(path_, ec);
    if (ec) throw Error(ErrorCode::Io, "cannot stat store log " + path_.string() + ": " + ec.message());
    if (size > valid_end) {
      std::filesystem::resize_file(path_, valid_end, ec);
      if (ec) throw Error(ErrorCode::Io, "cannot trim torn tail of " + path_.string() + ": " + ec.message());
    } else if (size < valid_end) {
      std::ofstream(path_, std::ios::app) << '\n';
    }
  } else if (path_.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path_.parent_path(), ec);
    if (ec) throw Error(ErrorCode::Io, "cannot create " + path_.parent_path().string() + ": " + ec.message());
  }
  log_ = std::fopen(path_.c_str(), "ab");
  if (!log_) throw Error(ErrorCode::Io, "cannot open store log " + path_.string() + ": " + std::strerror(errno));
}

DocumentStore::~DocumentStore() {
  if (log_) std::fclose(log_);
}

void DocumentStore::index(Document doc) {
  by_time_[{doc.device(), doc.kind()}][doc.ts_ms()] = doc.doc_id;
  auto& chain = revs_[doc.doc_id];
  chain.push_back(std::move(doc));
  ++revision_count_;
}

Document DocumentStore::put(const wire::Reading& reading, std::int64_t server_ts_ms) {
  return put(wire::to_json(reading), server_ts_ms);
}

Document DocumentStore::put(const json& body, std::int64_t server_ts_ms) {
  json clean = body;
  clean.erase("seq");
  const std::string device = clean.value("device", "");
  const std::string kind = clean.value("kind", "");
  if (device.empty() || kind.empty() || !clean.contains("ts_ms")) {
    throw Error(ErrorCode::InvalidArgument, "document body needs device, kind and ts_ms");
  }
  Document doc{make_doc_id(device, kind, clean["ts_ms"].get<std::int64_t>()), 1, std::move(clean), server_ts_ms};

  std::unique_lock lock(mu_);
  if (const auto it = revs_.find(doc.doc_id); it != revs_.end()) doc.rev = static_cast<int>(it->second.size()) + 1;
  if (log_) {
    const std::string line = doc.to_json().dump() + "\n";
    if (std::fwrite(line.data(), 1, line.size(), log_) != line.size() || std::fflush(log_) != 0) {
      throw Error(ErrorCode::Io, "append to " + path_.string() + " failed: " + std::strerror(errno));
    }
    if (fsync_ == FsyncPolicy::EveryPut && ::fsync(::fileno(log_)) != 0) {
      throw Error(ErrorCode::Io, "fsync " + path_.string() + " failed: " + std::strerror(errno));
    }
  }
  index(doc);
  return doc;
}

std::vector<Document> DocumentStore::query(const std::string& device, const std::string& kind, std::int64_t t0,
                                           std::int64_t t1) const {
  if (t0 > t1) throw Error(ErrorCode::InvalidArgument, "query interval has t0 > t1");
  std::shared_lock lock(mu_);
  std::vector<Document> out;
  const auto series = by_time_.find({device, kind});
  if (series == by_time_.end()) return out;
  for (auto it = series->second.lower_bound(t0); it != series->second.end() && it->first < t1; ++it) {
    out.push_back(revs_.at(it->second).back());
  }
  return out;
}

std::vector<Document> DocumentStore::revisions(const std::string& doc_id) const {
  std::shared_lock lock(mu_);
  const auto it = revs_.find(doc_id);
  return it == revs_.end() ? std::vector<Document>{} : it->second;
}

std::vector<Document> DocumentStore::all_latest() const {
  std::shared_lock lock(mu_);
  std::vector<Document> out;
  for (const auto& [key, series] : by_time_) {
    for (const auto& [ts, id] : series) out.push_back(revs_.at(id).back());
  }
  return out;
}

std::size_t DocumentStore::document_count() const {
  std::shared_lock lock(mu_);
  return revs_.size();
}

std::size_t DocumentStore::revision_count() const {
  std::shared_lock lock(mu_);
  return revision_count_;
}

std::vector<std::string> DocumentStore::devices() const {
  std::shared_lock lock(mu_);
  std::vector<std::string> out;
  for (const auto& [key, series] : by_time_) {
    if (out.empty() || out.back() != key.first) out.push_back(key.first);
  }
  return out;
}

}  // namespace mmplug::store
