#include "ecig/datastore/datastore.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <fstream>
#include <json.hpp>

#include "ecig/core/crypto.hpp"
#include "ecig/core/error.hpp"

namespace ecig::datastore {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::optional<std::uint64_t> id_of(const fs::path& file) {
  if (file.extension() != ".bin") return std::nullopt;
  const auto stem = file.stem().string();
  if (stem.empty() || !std::all_of(stem.begin(), stem.end(), ::isdigit)) return std::nullopt;
  return std::stoull(stem);
}

std::uint64_t max_id_under(const fs::path& dir) {
  std::uint64_t best = 0;
  std::error_code ec;
  if (!fs::exists(dir, ec)) return 0;
  for (auto it = fs::recursive_directory_iterator(dir, ec); it != fs::recursive_directory_iterator();
       it.increment(ec)) {
    if (ec) break;
    if (auto id = id_of(it->path())) best = std::max(best, *id);
  }
  return best;
}

Bytes read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::StorageError, "cannot read " + path.string());
  return Bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

std::string record_aad(Category c, std::uint32_t asset, std::uint64_t id) {
  return std::string("record/") + to_string(c) + "/" + std::to_string(asset) + "/" +
         std::to_string(id);
}

std::string profile_aad(std::uint64_t id) { return "profile/" + std::to_string(id); }

std::string encode_record(const StoredRecord& r) {
  json snap = json::array();
  for (const auto& [addr, word] : r.snapshot) snap.push_back({addr, word});
  json j;
  j["record_id"] = r.record_id;
  j["asset"] = r.asset_id;
  j["category"] = to_string(r.category);
  j["captured_at"] = r.captured_at_ms;
  j["snapshot"] = std::move(snap);
  return j.dump();
}

StoredRecord decode_record(const Bytes& plain) {
  const json j = json::parse(plain.begin(), plain.end());
  StoredRecord r;
  r.record_id = j.at("record_id").get<std::uint64_t>();
  r.asset_id = j.at("asset").get<std::uint32_t>();
  r.category = *category_from_string(j.at("category").get<std::string>());
  r.captured_at_ms = j.at("captured_at").get<std::int64_t>();
  for (const auto& p : j.at("snapshot")) {
    r.snapshot[p.at(0).get<std::uint16_t>()] = p.at(1).get<std::uint16_t>();
  }
  return r;
}

}  // namespace

const char* to_string(Category c) noexcept {
  return c == Category::Confidential ? "confidential" : "non-confidential";
}

std::optional<Category> category_from_string(std::string_view s) noexcept {
  if (s == "confidential") return Category::Confidential;
  if (s == "non-confidential") return Category::NonConfidential;
  return std::nullopt;
}

DataStore::DataStore(DataStoreOptions options, const Clock& clock)
    : options_(std::move(options)),
      clock_(clock),
      nw_log_((fs::create_directories(options_.root / "logs"), options_.root / "logs" / "nw_audit.log"),
              audit::World::NW, clock, options_.log_max_bytes) {
  for (Category c : {Category::Confidential, Category::NonConfidential}) {
    fs::create_directories(store_dir() / to_string(c));
  }
  fs::create_directories(store_dir() / "profiles");
  next_record_ = std::max(max_id_under(store_dir() / to_string(Category::Confidential)),
                          max_id_under(store_dir() / to_string(Category::NonConfidential))) + 1;
  next_profile_ = max_id_under(store_dir() / "profiles") + 1;
}

void DataStore::set_storage_key(Bytes key) {
  if (key.size() != crypto::kAeadKeySize) throw Error(Errc::NoStorageKey, "key must be 32 bytes");
  std::lock_guard lock(mu_);
  key_ = std::move(key);
}

bool DataStore::has_storage_key() const {
  std::lock_guard lock(mu_);
  return !key_.empty();
}

Bytes DataStore::key_copy() const {
  std::lock_guard lock(mu_);
  if (key_.empty()) throw Error(Errc::NoStorageKey);
  return key_;
}

fs::path DataStore::record_path(Category c, std::uint32_t asset, std::uint64_t id) const {
  return store_dir() / to_string(c) / std::to_string(asset) / (std::to_string(id) + ".bin");
}

fs::path DataStore::profile_path(std::uint64_t id) const {
  return store_dir() / "profiles" / (std::to_string(id) + ".bin");
}

void DataStore::write_atomic(const fs::path& path, ByteView data) const {
  std::error_code ec;
  fs::create_directories(path.parent_path(), ec);
  const auto tmp = path.string() + ".tmp";
  const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0600);
  if (fd < 0) throw Error(Errc::StorageError, "cannot create " + tmp);
  std::size_t off = 0;
  while (off < data.size()) {
    const ssize_t n = ::write(fd, data.data() + off, data.size() - off);
    if (n <= 0) {
      ::close(fd);
      ::unlink(tmp.c_str());
      throw Error(Errc::StorageError, "short write to " + tmp);
    }
    off += static_cast<std::size_t>(n);
  }
  ::fsync(fd);
  ::close(fd);
  fs::rename(tmp, path, ec);
  if (ec) throw Error(Errc::StorageError, ec.message());
}

RecordReceipt DataStore::put_record(StoredRecord rec) {
  const Bytes key = key_copy();
  {
    std::lock_guard lock(mu_);
    rec.record_id = next_record_++;
  }
  if (rec.captured_at_ms == 0) rec.captured_at_ms = clock_.now_ms();
  const Bytes sealed = crypto::seal(key, as_bytes(encode_record(rec)),
                                    as_bytes(record_aad(rec.category, rec.asset_id, rec.record_id)));
  write_atomic(record_path(rec.category, rec.asset_id, rec.record_id), sealed);
  return {rec.record_id, rec.asset_id, rec.category, rec.captured_at_ms};
}

std::vector<StoredRecord> DataStore::get_records(const RecordFilter& filter,
                                                 secmgr::Privilege privilege) const {
  if (filter.category == Category::Confidential && privilege != secmgr::Privilege::Full) {
    throw Error(Errc::RoleForbidden, "confidential records need full privilege");
  }
  std::vector<Category> cats;
  if (filter.category) {
    cats.push_back(*filter.category);
  } else {
    if (privilege == secmgr::Privilege::Full) cats.push_back(Category::Confidential);
    cats.push_back(Category::NonConfidential);
  }
  const Bytes key = key_copy();
  std::vector<StoredRecord> out;
  for (Category c : cats) {
    const fs::path dir = store_dir() / to_string(c);
    std::error_code ec;
    for (auto it = fs::recursive_directory_iterator(dir, ec);
         it != fs::recursive_directory_iterator(); it.increment(ec)) {
      if (ec) break;
      const auto id = id_of(it->path());
      if (!id) continue;
      std::uint32_t asset = 0;
      try {
        asset = static_cast<std::uint32_t>(std::stoul(it->path().parent_path().filename().string()));
      } catch (const std::exception&) {
        continue;
      }
      if (filter.asset_id && *filter.asset_id != asset) continue;
      const Bytes plain = crypto::open(key, read_file(it->path()), as_bytes(record_aad(c, asset, *id)));
      StoredRecord rec = decode_record(plain);
      if (filter.window.contains(rec.captured_at_ms)) out.push_back(std::move(rec));
    }
  }
  std::sort(out.begin(), out.end(),
            [](const StoredRecord& a, const StoredRecord& b) { return a.record_id < b.record_id; });
  return out;
}

void DataStore::remove_record(const RecordReceipt& receipt) {
  std::error_code ec;
  fs::remove(record_path(receipt.category, receipt.asset_id, receipt.record_id), ec);
}

std::uint64_t DataStore::put_profile(const std::string& document) {
  const Bytes key = key_copy();
  std::uint64_t id;
  {
    std::lock_guard lock(mu_);
    id = next_profile_++;
  }
  write_atomic(profile_path(id), crypto::seal(key, as_bytes(document), as_bytes(profile_aad(id))));
  return id;
}

std::optional<std::string> DataStore::get_profile(std::uint64_t id) const {
  const auto path = profile_path(id);
  std::error_code ec;
  if (!fs::exists(path, ec)) return std::nullopt;
  const Bytes plain = crypto::open(key_copy(), read_file(path), as_bytes(profile_aad(id)));
  return std::string(plain.begin(), plain.end());
}

std::optional<std::uint64_t> DataStore::latest_profile_id() const {
  const auto id = max_id_under(store_dir() / "profiles");
  if (id == 0) return std::nullopt;
  return id;
}

std::uint64_t DataStore::append_log(audit::AuditRecord rec) {
  try {
    return nw_log_.append(std::move(rec));
  } catch (const Error& e) {
    if (e.code() == Errc::StorageFull) throw Error(Errc::StorageError, e.detail());
    throw;
  }
}

std::vector<audit::AuditRecord> DataStore::read_logs(const audit::TimeWindow& window,
                                                     std::optional<audit::World> world) const {
  std::vector<audit::AuditRecord> out;
  if (!world || *world == audit::World::NW) out = nw_log_.read(window);
  if (options_.sw_log && (!world || *world == audit::World::SW)) {
    auto sw = audit::AuditLog::read_file(*options_.sw_log, window);
    out.insert(out.end(), sw.begin(), sw.end());
  }
  return out;
}

}  // namespace ecig::datastore
