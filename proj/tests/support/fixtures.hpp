#pragma once

#include <sys/types.h>

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "ecig/core/audit.hpp"
#include "ecig/core/bytes.hpp"
#include "ecig/gateway/gateway.hpp"
#include "ecig/plcsim/sim_asset.hpp"
#include "ecig/secmgr/types.hpp"

namespace testbed {

namespace fs = std::filesystem;
using ecig::Bytes;

class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

// Fixed role keys; distinct and not all-zero.
Bytes role_key(ecig::secmgr::Role role);
std::string role_key_hex(ecig::secmgr::Role role);
Bytes device_key(std::uint32_t asset_id);

void write_file(const fs::path& path, const Bytes& data);
void write_text(const fs::path& path, const std::string& text);
Bytes read_file(const fs::path& path);

struct AssetSpec {
  std::uint32_t id = 1;
  ecig::secmgr::AddressRange space{0x0000, 0x03FF};
  std::vector<ecig::secmgr::AddressRange> confidential{{0x0100, 0x01FF}};
  std::vector<ecig::secmgr::AddressRange> illegal;
  std::map<std::uint16_t, std::vector<std::uint16_t>> preload;
};

// The real ecig-secure executable in a child process.
class SecureProcess {
 public:
  SecureProcess() = default;
  ~SecureProcess();
  SecureProcess(const SecureProcess&) = delete;
  SecureProcess& operator=(const SecureProcess&) = delete;

  // Starts and waits for the ready line.
  void start(const fs::path& config, const std::string& mode);
  void stop();
  bool running() const { return pid_ > 0; }

 private:
  pid_t pid_ = -1;
};

struct BedOptions {
  std::string hash = "sha1";
  bool train = true;
  std::size_t image_size = 4096;
};

// PLC fleet, secure world and measured image, all under one temp dir.
class TestBed {
 public:
  explicit TestBed(std::vector<AssetSpec> assets, BedOptions options = {});
  ~TestBed();

  const fs::path& dir() const { return tmp_.path(); }
  const fs::path& image() const { return image_; }
  const std::string& sw_endpoint() const { return sw_endpoint_; }
  fs::path sw_log() const { return tmp_ / "sw" / "sw_audit.log"; }
  ecig::plcsim::SimAsset& asset(std::uint32_t id);
  SecureProcess& secure() { return sw_; }

  // (Re)starts the secure world in the given mode.
  void start_secure(const std::string& mode);
  // Training run for the current image, then back to normal mode.
  void train();

  std::vector<ecig::audit::AuditRecord> sw_records() const;

  // Gateway config pointing at this bed; scheduler off, ephemeral port.
  ecig::gateway::GatewayConfig gateway_config() const;

 private:
  void write_sw_config(const std::string& mode);

  TempDir tmp_;
  BedOptions options_;
  std::vector<AssetSpec> specs_;
  std::map<std::uint32_t, std::unique_ptr<ecig::plcsim::SimAsset>> assets_;
  fs::path image_;
  std::string sw_endpoint_;
  SecureProcess sw_;
};

// Users provisioned in every bed: "tp" ThirdParty, "eng" Engineer,
// "admin" Administrator; the password is "<user>-pw".
fs::path write_users(const fs::path& dir);

}  // namespace testbed

namespace testbed {

// Normal-world stack wired by hand: attested session, datastore keyed by
// the security manager, activity manager.
struct NwStack {
  NwStack(TestBed& bed, const ecig::Clock& clock = ecig::system_clock(),
          ecig::actmgr::ActivityOptions options = {});
  ~NwStack();

  ecig::worldlink::WorldContext ctx;
  std::unique_ptr<ecig::actmgr::SmProxy> sm;
  std::unique_ptr<ecig::datastore::DataStore> dc;
  std::unique_ptr<ecig::actmgr::ActivityManager> am;

  // NW records of one flow, in order.
  std::vector<ecig::audit::AuditRecord> flow_records(std::uint64_t flow) const;
  std::vector<std::string> flow_steps(std::uint64_t flow) const;
};

std::vector<std::string> sw_flow_steps(const TestBed& bed, std::uint64_t flow);

ecig::actmgr::Principal principal(ecig::secmgr::Role role);

}  // namespace testbed
