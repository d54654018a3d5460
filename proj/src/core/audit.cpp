#include "ecig/core/audit.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <fstream>
#include <json.hpp>

#include "ecig/core/error.hpp"

namespace ecig::audit {

using nlohmann::json;

const char* to_string(World w) noexcept { return w == World::NW ? "NW" : "SW"; }

const char* to_string(Outcome o) noexcept {
  switch (o) {
    case Outcome::Ok: return "Ok";
    case Outcome::Denied: return "Denied";
    case Outcome::Failed: return "Failed";
  }
  return "Failed";
}

std::optional<Outcome> outcome_from_string(std::string_view s) noexcept {
  if (s == "Ok") return Outcome::Ok;
  if (s == "Denied") return Outcome::Denied;
  if (s == "Failed") return Outcome::Failed;
  return std::nullopt;
}

std::string encode_line(const AuditRecord& rec) {
  json j;
  j["seq"] = rec.seq;
  j["world"] = to_string(rec.world);
  j["ts"] = rec.timestamp_ms;
  j["principal"] = rec.principal;
  j["activity"] = rec.activity;
  j["detail"] = rec.detail;
  if (rec.outcome) j["outcome"] = to_string(*rec.outcome);
  if (rec.latency_ms) j["latency_ms"] = *rec.latency_ms;
  if (rec.flow) j["flow"] = *rec.flow;
  if (rec.reason) j["reason"] = *rec.reason;
  return j.dump();
}

AuditRecord decode_line(std::string_view line) {
  try {
    const json j = json::parse(line);
    AuditRecord rec;
    rec.seq = j.at("seq").get<std::uint64_t>();
    rec.world = j.at("world").get<std::string>() == "SW" ? World::SW : World::NW;
    rec.timestamp_ms = j.at("ts").get<std::int64_t>();
    rec.principal = j.at("principal").get<std::string>();
    rec.activity = j.at("activity").get<std::string>();
    rec.detail = j.value("detail", std::string{});
    if (j.contains("outcome")) {
      rec.outcome = outcome_from_string(j["outcome"].get<std::string>());
      if (!rec.outcome) throw Error(Errc::StorageError, "bad outcome");
    }
    if (j.contains("latency_ms")) rec.latency_ms = j["latency_ms"].get<std::int64_t>();
    if (j.contains("flow")) rec.flow = j["flow"].get<std::uint64_t>();
    if (j.contains("reason")) rec.reason = j["reason"].get<std::string>();
    return rec;
  } catch (const json::exception& e) {
    throw Error(Errc::StorageError, std::string("malformed audit line: ") + e.what());
  }
}

AuditLog::AuditLog(std::filesystem::path path, World world, const Clock& clock,
                   std::uint64_t max_bytes)
    : path_(std::move(path)), world_(world), clock_(clock), max_bytes_(max_bytes) {
  std::error_code ec;
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path(), ec);
  for (const auto& rec : read_file(path_)) {
    last_seq_ = std::max(last_seq_, rec.seq);
    last_ts_ = std::max(last_ts_, rec.timestamp_ms);
  }
  size_ = std::filesystem::exists(path_, ec) ? std::filesystem::file_size(path_, ec) : 0;
}

std::uint64_t AuditLog::append(AuditRecord rec) {
  std::lock_guard lock(mu_);
  rec.seq = last_seq_ + 1;
  rec.world = world_;
  rec.timestamp_ms = std::max(clock_.now_ms(), last_ts_);
  const std::string line = encode_line(rec) + "\n";
  if (max_bytes_ != 0 && size_ + line.size() > max_bytes_) {
    throw Error(Errc::StorageFull, path_.string());
  }
  const int fd = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0600);
  if (fd < 0) throw Error(Errc::StorageError, "cannot open " + path_.string());
  const ssize_t w = ::write(fd, line.data(), line.size());
  ::close(fd);
  if (w != static_cast<ssize_t>(line.size())) {
    throw Error(Errc::StorageError, "short write to " + path_.string());
  }
  size_ += line.size();
  last_seq_ = rec.seq;
  last_ts_ = rec.timestamp_ms;
  return rec.seq;
}

std::vector<AuditRecord> AuditLog::read(const TimeWindow& window) const {
  std::lock_guard lock(mu_);
  return read_file(path_, window);
}

std::uint64_t AuditLog::last_seq() const {
  std::lock_guard lock(mu_);
  return last_seq_;
}

std::vector<AuditRecord> AuditLog::read_file(const std::filesystem::path& path,
                                             const TimeWindow& window) {
  std::vector<AuditRecord> out;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto rec = decode_line(line);
    if (window.contains(rec.timestamp_ms)) out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace ecig::audit
