#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "ecig/core/audit.hpp"
#include "ecig/core/bytes.hpp"
#include "ecig/core/clock.hpp"
#include "ecig/secmgr/types.hpp"

namespace ecig::datastore {

enum class Category { Confidential, NonConfidential };

const char* to_string(Category c) noexcept;
std::optional<Category> category_from_string(std::string_view s) noexcept;

struct StoredRecord {
  std::uint64_t record_id = 0;
  std::uint32_t asset_id = 0;
  Category category = Category::NonConfidential;
  std::int64_t captured_at_ms = 0;
  std::map<std::uint16_t, std::uint16_t> snapshot;  // address -> word

  bool operator==(const StoredRecord&) const = default;
};

struct RecordReceipt {
  std::uint64_t record_id = 0;
  std::uint32_t asset_id = 0;
  Category category = Category::NonConfidential;
  std::int64_t captured_at_ms = 0;
};

struct RecordFilter {
  std::optional<std::uint32_t> asset_id;
  std::optional<Category> category;  // unset: every category the requester may see
  audit::TimeWindow window;
};

struct DataStoreOptions {
  std::filesystem::path root;          // holds store/ and logs/
  std::optional<std::filesystem::path> sw_log{};  // read-only view of the SW log
  std::uint64_t log_max_bytes = 0;
};

// On-disk layout under root:
//   store/<category>/<asset>/<id>.bin   nonce(12) | ciphertext | tag(16)
//   store/profiles/<id>.bin             same sealing
//   logs/nw_audit.log                   one JSON object per line
// The AEAD associated data binds each blob to its category, asset and id,
// so a file moved to another slot fails to open.
class DataStore {
 public:
  DataStore(DataStoreOptions options, const Clock& clock);

  // Throws Error(NoStorageKey) unless the key is 32 bytes.
  void set_storage_key(Bytes key);
  bool has_storage_key() const;

  // Assigns record_id (and captured_at when zero). Throws NoStorageKey,
  // StorageError.
  RecordReceipt put_record(StoredRecord rec);

  // Throws Error(RoleForbidden) when a NonConfidentialOnly requester names the
  // Confidential category; Error(DecryptFailure) on a tampered blob.
  std::vector<StoredRecord> get_records(const RecordFilter& filter,
                                        secmgr::Privilege privilege) const;

  // Used to roll back a partially stored snapshot.
  void remove_record(const RecordReceipt& receipt);

  std::uint64_t put_profile(const std::string& document);
  std::optional<std::string> get_profile(std::uint64_t id) const;
  std::optional<std::uint64_t> latest_profile_id() const;

  std::uint64_t append_log(audit::AuditRecord rec);
  std::vector<audit::AuditRecord> read_logs(const audit::TimeWindow& window,
                                            std::optional<audit::World> world = {}) const;
  audit::AuditLog& nw_log() { return nw_log_; }

  std::filesystem::path store_dir() const { return options_.root / "store"; }

 private:
  std::filesystem::path record_path(Category c, std::uint32_t asset, std::uint64_t id) const;
  std::filesystem::path profile_path(std::uint64_t id) const;
  Bytes key_copy() const;
  void write_atomic(const std::filesystem::path& path, ByteView data) const;

  DataStoreOptions options_;
  const Clock& clock_;
  audit::AuditLog nw_log_;
  mutable std::mutex mu_;
  Bytes key_;
  std::uint64_t next_record_ = 1;
  std::uint64_t next_profile_ = 1;
};

}  // namespace ecig::datastore
