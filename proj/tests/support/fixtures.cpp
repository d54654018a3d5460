#include "fixtures.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <json.hpp>
#include <stdexcept>
#include <thread>

#include "ecig/core/crypto.hpp"
#include "ecig/gateway/users.hpp"

#ifndef ECIG_SECURE_BIN
#error "ECIG_SECURE_BIN must name the ecig-secure executable"
#endif

namespace testbed {

using nlohmann::json;
using ecig::secmgr::Role;

TempDir::TempDir() {
  std::string tmpl = (fs::temp_directory_path() / "ecig-XXXXXX").string();
  if (!::mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
  path_ = tmpl;
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

Bytes role_key(Role role) {
  Bytes k(32);
  for (std::size_t i = 0; i < k.size(); ++i) {
    k[i] = static_cast<std::uint8_t>(0x11 * (static_cast<int>(role) + 1) + i);
  }
  return k;
}

std::string role_key_hex(Role role) { return ecig::to_hex(role_key(role)); }

Bytes device_key(std::uint32_t asset_id) {
  Bytes k(32);
  for (std::size_t i = 0; i < k.size(); ++i) k[i] = static_cast<std::uint8_t>(0xA0 + asset_id * 7 + i);
  return k;
}

void write_file(const fs::path& path, const Bytes& data) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
}

void write_text(const fs::path& path, const std::string& text) {
  write_file(path, ecig::to_bytes(text));
}

Bytes read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return Bytes(std::istreambuf_iterator<char>(in), {});
}

SecureProcess::~SecureProcess() { stop(); }

void SecureProcess::start(const fs::path& config, const std::string& mode) {
  stop();
  int out[2];
  if (::pipe(out) != 0) throw std::runtime_error("pipe failed");
  pid_ = ::fork();
  if (pid_ < 0) throw std::runtime_error("fork failed");
  if (pid_ == 0) {
    ::dup2(out[1], STDOUT_FILENO);
    ::close(out[0]);
    ::close(out[1]);
    const std::string cfg = config.string();
    ::execl(ECIG_SECURE_BIN, ECIG_SECURE_BIN, "--config", cfg.c_str(), "--mode", mode.c_str(),
            static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::close(out[1]);
  std::string seen;
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(10);
  while (seen.find('\n') == std::string::npos) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
        deadline - std::chrono::steady_clock::now());
    pollfd p{out[0], POLLIN, 0};
    if (left.count() <= 0 || ::poll(&p, 1, static_cast<int>(left.count())) <= 0) break;
    char buf[256];
    const ssize_t n = ::read(out[0], buf, sizeof(buf));
    if (n <= 0) break;
    seen.append(buf, static_cast<std::size_t>(n));
  }
  ::close(out[0]);
  if (seen.rfind("ready", 0) != 0) {
    stop();
    throw std::runtime_error("ecig-secure did not start: " + seen);
  }
}

void SecureProcess::stop() {
  if (pid_ <= 0) return;
  ::kill(pid_, SIGTERM);
  int status = 0;
  ::waitpid(pid_, &status, 0);
  pid_ = -1;
}

fs::path write_users(const fs::path& dir) {
  using ecig::gateway::UserStore;
  const auto path = dir / "users.json";
  write_text(path, UserStore::dump({UserStore::make_entry("tp", Role::ThirdParty, "tp-pw", 1000),
                                    UserStore::make_entry("eng", Role::Engineer, "eng-pw", 1000),
                                    UserStore::make_entry("admin", Role::Administrator, "admin-pw", 1000)}));
  return path;
}

TestBed::TestBed(std::vector<AssetSpec> assets, BedOptions options)
    : options_(std::move(options)), specs_(std::move(assets)) {
  for (const auto& s : specs_) {
    ecig::plcsim::SimAssetConfig c;
    c.asset_id = s.id;
    c.illegal_ranges = s.illegal;
    c.preload = s.preload;
    c.device_key = device_key(s.id);
    auto a = std::make_unique<ecig::plcsim::SimAsset>(std::move(c));
    a->start();
    assets_[s.id] = std::move(a);
  }
  image_ = tmp_ / "gateway.img";
  write_file(image_, ecig::crypto::random_bytes(options_.image_size));
  sw_endpoint_ = (tmp_ / "sw.sock").string();
  write_users(tmp_.path());
  if (options_.train) {
    train();
  } else {
    start_secure("normal");
  }
}

TestBed::~TestBed() {
  sw_.stop();
  for (auto& [id, a] : assets_) a->stop();
}

ecig::plcsim::SimAsset& TestBed::asset(std::uint32_t id) { return *assets_.at(id); }

void TestBed::write_sw_config(const std::string& mode) {
  json assets = json::array();
  for (const auto& s : specs_) {
    json conf = json::array();
    for (const auto& r : s.confidential) conf.push_back({r.lo, r.hi});
    assets.push_back({{"id", s.id},
                      {"endpoint", assets_.at(s.id)->endpoint()},
                      {"unit", 1},
                      {"register_space", {s.space.lo, s.space.hi}},
                      {"confidential", conf},
                      {"device_key", ecig::to_hex(device_key(s.id))}});
  }
  json keys;
  for (Role r : ecig::secmgr::kAllRoles) keys[ecig::secmgr::to_string(r)] = role_key_hex(r);
  json cfg{{"listen", sw_endpoint_},
           {"mode", mode},
           {"hash", options_.hash},
           {"storage_dir", (tmp_ / "sw").string()},
           {"role_keys", keys},
           {"assets", assets}};
  write_text(tmp_ / "sw.json", cfg.dump(2));
}

void TestBed::start_secure(const std::string& mode) {
  write_sw_config(mode);
  sw_.start(tmp_ / "sw.json", mode);
}

void TestBed::train() {
  start_secure("training");
  auto ctx = ecig::worldlink::WorldContext::initialize(sw_endpoint_);
  ctx.train(ecig::secmgr::kTrustedAppId, image_);
  ctx.finalize();
  start_secure("normal");
}

std::vector<ecig::audit::AuditRecord> TestBed::sw_records() const {
  return ecig::audit::AuditLog::read_file(sw_log());
}

ecig::gateway::GatewayConfig TestBed::gateway_config() const {
  ecig::gateway::GatewayConfig c;
  c.listen = "127.0.0.1:0";
  c.sw_endpoint = sw_endpoint_;
  c.image = image_;
  c.data_dir = tmp_ / "nw";
  c.staging_dir = tmp_ / "nw" / "staging";
  c.users_file = tmp_ / "users.json";
  c.sw_log = sw_log();
  c.modbus_timeout_ms = 1000;
  return c;
}

}  // namespace testbed

namespace testbed {

NwStack::NwStack(TestBed& bed, const ecig::Clock& clock, ecig::actmgr::ActivityOptions options)
    : ctx(ecig::worldlink::WorldContext::initialize(bed.sw_endpoint())) {
  sm = std::make_unique<ecig::actmgr::SmProxy>(ctx.open_session(ecig::secmgr::kTrustedAppId, bed.image()));
  ecig::datastore::DataStoreOptions d;
  d.root = bed.dir() / "nw";
  d.sw_log = bed.sw_log();
  dc = std::make_unique<ecig::datastore::DataStore>(d, clock);
  dc->set_storage_key(sm->issue_storage_key());
  if (options.staging_dir.empty()) options.staging_dir = bed.dir() / "nw" / "staging";
  if (options.modbus_timeout_ms == ecig::netclient::kDefaultTimeoutMs) options.modbus_timeout_ms = 1000;
  am = std::make_unique<ecig::actmgr::ActivityManager>(*sm, *dc, clock, options);
}

NwStack::~NwStack() {
  try {
    sm->session().close();
    ctx.finalize();
  } catch (const ecig::Error&) {
  }
}

std::vector<ecig::audit::AuditRecord> NwStack::flow_records(std::uint64_t flow) const {
  std::vector<ecig::audit::AuditRecord> out;
  for (auto& r : dc->read_logs({}, ecig::audit::World::NW)) {
    if (r.flow == flow) out.push_back(r);
  }
  return out;
}

std::vector<std::string> NwStack::flow_steps(std::uint64_t flow) const {
  std::vector<std::string> out;
  for (const auto& r : flow_records(flow)) out.push_back(r.activity);
  return out;
}

std::vector<std::string> sw_flow_steps(const TestBed& bed, std::uint64_t flow) {
  std::vector<std::string> out;
  for (const auto& r : bed.sw_records()) {
    if (r.flow == flow) out.push_back(r.activity);
  }
  return out;
}

ecig::actmgr::Principal principal(ecig::secmgr::Role role) {
  switch (role) {
    case Role::ThirdParty: return {"tp", role};
    case Role::Engineer: return {"eng", role};
    case Role::Administrator: return {"admin", role};
    case Role::Scheduler: return {"scheduler", role};
  }
  return {"tp", role};
}

}  // namespace testbed
