#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "ecig/actmgr/activity_manager.hpp"
#include "ecig/actmgr/security_service.hpp"
#include "ecig/core/clock.hpp"
#include "ecig/datastore/datastore.hpp"
#include "ecig/gateway/users.hpp"

namespace ecig::gateway {

constexpr std::size_t kDefaultUploadCap = 16u << 20;

struct RestOptions {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;  // 0 picks a free port
  std::filesystem::path staging_dir;
  std::chrono::seconds token_ttl{3600};
  std::size_t upload_cap = kDefaultUploadCap;
};

// HTTP status for an activity result.
int status_for(const actmgr::ActivityResult& result, bool parse_error);

class RestServer {
 public:
  RestServer(RestOptions options, actmgr::ActivityManager& am, datastore::DataStore& dc,
             const UserStore& users, const Clock& clock);
  ~RestServer();
  RestServer(const RestServer&) = delete;
  RestServer& operator=(const RestServer&) = delete;

  // Throws Error(BindFailure).
  void start();
  void stop();
  std::uint16_t port() const { return port_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::uint16_t port_ = 0;
};

// Gateway configuration file (JSON):
//   listen, sw_endpoint, image, data_dir, staging_dir, users, token_ttl_s,
//   upload_cap, modbus_timeout_ms, profile_window_s, sw_log,
//   scheduler: {enabled, key, assets, store_interval_s, profile_interval_s}
// Relative paths resolve against the config file's directory.
struct GatewayConfig {
  std::string listen = "127.0.0.1:8080";
  std::string sw_endpoint;
  std::filesystem::path image;  // measured for attestation; defaults to the running binary
  std::filesystem::path data_dir;
  std::filesystem::path staging_dir;
  std::filesystem::path users_file;
  std::optional<std::filesystem::path> sw_log;
  std::chrono::seconds token_ttl{3600};
  std::size_t upload_cap = kDefaultUploadCap;
  int modbus_timeout_ms = netclient::kDefaultTimeoutMs;
  std::chrono::seconds profile_window{86400};
  bool scheduler_enabled = false;
  Bytes scheduler_key;
  std::vector<std::uint32_t> scheduled_assets;
  std::chrono::seconds store_interval{60};
  std::chrono::seconds profile_interval{300};

  static GatewayConfig load(const std::filesystem::path& file);
  static GatewayConfig parse(const std::string& text, const std::filesystem::path& base_dir = {});
};

// The normal-world process: attested session to the security manager,
// datastore keyed by it, activity manager, scheduler and REST surface.
class Gateway {
 public:
  // Opens the context and the attested session. Throws EndpointUnreachable,
  // AttestationFailure, NoTrainedHash, BadConfig.
  Gateway(GatewayConfig config, const Clock& clock = system_clock());
  ~Gateway();
  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  void start();
  void stop();

  std::uint16_t port() const;
  actmgr::ActivityManager& activities() { return *am_; }
  datastore::DataStore& store() { return *dc_; }
  actmgr::SmProxy& security() { return *sm_; }

 private:
  GatewayConfig config_;
  const Clock& clock_;
  std::optional<worldlink::WorldContext> ctx_;
  std::unique_ptr<actmgr::SmProxy> sm_;
  std::unique_ptr<datastore::DataStore> dc_;
  std::unique_ptr<actmgr::ActivityManager> am_;
  std::unique_ptr<actmgr::Scheduler> scheduler_;
  UserStore users_;
  std::unique_ptr<RestServer> rest_;
  bool started_ = false;
};

}  // namespace ecig::gateway
