#pragma once

#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ecig/core/clock.hpp"

namespace ecig::audit {

enum class World { NW, SW };
enum class Outcome { Ok, Denied, Failed };

const char* to_string(World w) noexcept;
const char* to_string(Outcome o) noexcept;
std::optional<Outcome> outcome_from_string(std::string_view s) noexcept;

// One chronicle entry. Step records carry a dotted activity such as
// "sm.validate_key"; terminal records carry the command kind ("read",
// "store_s", ...) together with an outcome and latency.
struct AuditRecord {
  std::uint64_t seq = 0;
  World world = World::NW;
  std::int64_t timestamp_ms = 0;
  std::string principal;
  std::string activity;
  std::optional<Outcome> outcome;
  std::optional<std::int64_t> latency_ms;
  std::string detail;
  // Correlates the NW and SW records of one activity run.
  std::optional<std::uint64_t> flow;
  std::optional<std::string> reason;

  bool operator==(const AuditRecord&) const = default;
};

// Log line format: one compact JSON object per line, keys sorted, UTF-8.
std::string encode_line(const AuditRecord& rec);
// Throws Error(StorageError) on a malformed line.
AuditRecord decode_line(std::string_view line);

struct TimeWindow {
  std::int64_t from_ms = 0;
  std::int64_t to_ms = INT64_MAX;

  bool contains(std::int64_t t) const { return t >= from_ms && t <= to_ms; }
};

// Append-only, per-world chronicle file. Sequence numbers continue past the
// previous maximum after a restart; timestamps never decrease.
class AuditLog {
 public:
  AuditLog(std::filesystem::path path, World world, const Clock& clock,
           std::uint64_t max_bytes = 0);

  // Assigns seq, world and timestamp; returns the seq. Throws
  // Error(StorageFull) past max_bytes and Error(StorageError) on I/O failure.
  std::uint64_t append(AuditRecord rec);

  std::vector<AuditRecord> read(const TimeWindow& window = {}) const;
  std::uint64_t last_seq() const;
  const std::filesystem::path& path() const { return path_; }
  World world() const { return world_; }

  static std::vector<AuditRecord> read_file(const std::filesystem::path& path,
                                            const TimeWindow& window = {});

 private:
  std::filesystem::path path_;
  World world_;
  const Clock& clock_;
  std::uint64_t max_bytes_;
  mutable std::mutex mu_;
  std::uint64_t last_seq_ = 0;
  std::int64_t last_ts_ = 0;
  std::uint64_t size_ = 0;
};

}  // namespace ecig::audit
