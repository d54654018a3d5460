#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "ecig/actmgr/security_service.hpp"
#include "ecig/cmdparse/command.hpp"
#include "ecig/core/clock.hpp"
#include "ecig/datastore/datastore.hpp"
#include "ecig/netclient/connection.hpp"
#include "ecig/secmgr/types.hpp"

namespace ecig::actmgr {

struct Principal {
  std::string user_id;
  secmgr::Role role = secmgr::Role::ThirdParty;
};

enum class Status { Ok, Denied, Failed };
const char* to_string(Status s) noexcept;

struct RegisterWords {
  std::vector<std::uint16_t> words;
};
struct WriteReceipt {
  std::uint16_t addr = 0;
  std::uint16_t count = 0;
};
struct InstallReceipt {
  Bytes image_digest;  // SHA-256 of the staged image
  Bytes proof;         // as returned by the asset and accepted by the security manager
};
struct RecordReceipts {
  std::vector<datastore::RecordReceipt> records;
};
struct ProfileRef {
  std::uint64_t profile_id = 0;
};

using Payload = std::variant<std::monostate, RegisterWords, WriteReceipt, InstallReceipt,
                             RecordReceipts, ProfileRef>;

struct ActivityResult {
  Status status = Status::Failed;
  std::string reason;  // error or deny code; empty on Ok
  std::string detail;
  Payload payload;
  std::uint64_t flow = 0;
  std::vector<std::uint64_t> audit_ids;
};

struct ActivityOptions {
  std::filesystem::path staging_dir;
  std::chrono::milliseconds profile_window{std::chrono::hours(24)};
  std::size_t baseline_profiles = 5;
  double anomaly_k = 3.0;
  int modbus_timeout_ms = netclient::kDefaultTimeoutMs;
};

// Table of which roles may run which command kind.
bool role_permits(cmdparse::CommandKind kind, secmgr::Role role) noexcept;

// Rejects empty names, separators and dot entries. Staged files are plain
// names inside the staging directory.
bool is_valid_staged_name(std::string_view name) noexcept;

class ActivityManager {
 public:
  ActivityManager(SecurityService& sm, datastore::DataStore& dc, const Clock& clock,
                  ActivityOptions options);

  // Parses and dispatches one line. Parse failures come back as Failed with
  // the parser's error code as reason and `parse_error` set.
  ActivityResult submit(std::string_view line, const Principal& who, bool* parse_error = nullptr);

  ActivityResult dispatch(const cmdparse::ValidatedCommand& cmd, const Principal& who);

  // Called with each fresh asset connection before any request is sent.
  using ConnectionHook = std::function<void(netclient::AssetConnection&)>;
  void set_connection_hook(ConnectionHook hook);

  const ActivityOptions& options() const { return options_; }
  datastore::DataStore& datastore() { return dc_; }

 private:
  class Flow;

  ActivityResult run(const cmdparse::ValidatedCommand& cmd, Flow& flow);
  ActivityResult run_diagnostic(const cmdparse::ValidatedCommand& cmd, Flow& flow);
  ActivityResult run_firmware_update(const cmdparse::ValidatedCommand& cmd, Flow& flow);
  ActivityResult run_maintenance(const cmdparse::ValidatedCommand& cmd, Flow& flow);
  ActivityResult run_store(const cmdparse::ValidatedCommand& cmd, Flow& flow);
  ActivityResult run_threat_profile(const cmdparse::ValidatedCommand& cmd, Flow& flow);

  // Connect, read or write, disconnect. Shared by the plain and keyed register flows.
  ActivityResult register_io(const cmdparse::ValidatedCommand& cmd, const Route& route, Flow& flow);
  std::unique_ptr<netclient::AssetConnection> connect(std::uint32_t asset_id, const Route& route,
                                                      Flow& flow);
  std::vector<std::uint16_t> read_span(netclient::AssetConnection& conn, std::uint32_t addr,
                                       std::uint32_t count);

  SecurityService& sm_;
  datastore::DataStore& dc_;
  const Clock& clock_;
  ActivityOptions options_;
  std::mutex hook_mu_;
  ConnectionHook hook_;
};

struct ScheduleConfig {
  std::chrono::milliseconds store_interval{std::chrono::seconds(60)};
  std::chrono::milliseconds profile_interval{std::chrono::seconds(300)};
  std::vector<std::uint32_t> assets;
  Bytes scheduler_key;
  bool profiles = true;
};

// Periodic store_s per asset and gen_threat_profile_s, dispatched as the
// "scheduler" principal with its own key. Each timer fires once on start.
class Scheduler {
 public:
  // Throws Error(BadInterval) for an interval under one second.
  Scheduler(ActivityManager& am, ScheduleConfig config);
  ~Scheduler();
  Scheduler(const Scheduler&) = delete;
  Scheduler& operator=(const Scheduler&) = delete;

  void start();
  void stop();

  std::size_t store_ticks() const { return store_ticks_.load(); }
  std::size_t profile_ticks() const { return profile_ticks_.load(); }

 private:
  void loop();

  ActivityManager& am_;
  ScheduleConfig config_;
  std::mutex mu_;
  std::condition_variable cv_;
  bool stopping_ = false;
  std::thread thread_;
  std::atomic<std::size_t> store_ticks_{0};
  std::atomic<std::size_t> profile_ticks_{0};
};

}  // namespace ecig::actmgr
