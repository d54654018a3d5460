#include "ecig/plcsim/sim_asset.hpp"

#include <sys/socket.h>

#include <algorithm>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "ecig/core/crypto.hpp"
#include "ecig/core/error.hpp"

namespace ecig::plcsim {

using nlohmann::json;

namespace {

constexpr std::size_t kRegisterCount = 65536;

std::uint16_t word_of(const json& v) {
  if (v.is_number_unsigned()) {
    const auto n = v.get<std::uint64_t>();
    if (n > 0xFFFF) throw Error(Errc::BadConfig, "register word out of range");
    return static_cast<std::uint16_t>(n);
  }
  const auto s = v.get<std::string>();
  auto b = from_hex(s);
  if (s.size() != 4 || !b) throw Error(Errc::BadConfig, "bad register word '" + s + "'");
  return get_u16(*b, 0);
}

}  // namespace

std::vector<SimAssetConfig> parse_fleet(const std::string& text) {
  std::vector<SimAssetConfig> out;
  try {
    const json j = json::parse(text);
    for (const auto& a : j.at("assets")) {
      SimAssetConfig c;
      c.asset_id = a.at("id").get<std::uint32_t>();
      const auto ep = net::parse_endpoint(a.at("listen").get<std::string>());
      c.host = ep.host;
      c.port = ep.port;
      auto key = from_hex(a.at("device_key").get<std::string>());
      if (!key || key->size() != 32) throw Error(Errc::BadConfig, "device_key must be 64 hex digits");
      c.device_key = *key;
      for (const auto& r : a.value("illegal", json::array())) {
        c.illegal_ranges.push_back({r.at(0).get<std::uint32_t>(), r.at(1).get<std::uint32_t>()});
      }
      for (const auto& p : a.value("preload", json::array())) {
        const auto addr = p.at("addr").get<std::uint32_t>();
        std::vector<std::uint16_t> words;
        for (const auto& w : p.at("words")) words.push_back(word_of(w));
        if (addr + words.size() > kRegisterCount) throw Error(Errc::BadConfig, "preload past 0xFFFF");
        c.preload[static_cast<std::uint16_t>(addr)] = std::move(words);
      }
      out.push_back(std::move(c));
    }
  } catch (const json::exception& e) {
    throw Error(Errc::BadConfig, e.what());
  }
  return out;
}

std::vector<SimAssetConfig> load_fleet(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(Errc::BadConfig, "cannot read " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_fleet(ss.str());
}

SimAsset::SimAsset(SimAssetConfig config)
    : config_(std::move(config)), registers_(kRegisterCount, 0) {
  for (const auto& [addr, words] : config_.preload) {
    std::copy(words.begin(), words.end(), registers_.begin() + addr);
  }
}

SimAsset::~SimAsset() { stop(); }

void SimAsset::start() {
  auto [fd, port] = net::listen_tcp(config_.host, config_.port);
  listener_ = std::move(fd);
  port_ = port;
  running_ = true;
  acceptor_ = std::thread([this] { accept_loop(); });
}

void SimAsset::stop() {
  if (!running_.exchange(false)) return;
  listener_.shutdown();
  if (acceptor_.joinable()) acceptor_.join();
  {
    std::lock_guard lock(conn_mu_);
    for (int fd : open_fds_) ::shutdown(fd, SHUT_RDWR);
  }
  for (auto& w : workers_) {
    if (w.thread.joinable()) w.thread.join();
  }
  workers_.clear();
  listener_.reset();
}

void SimAsset::reap_finished() {
  for (auto it = workers_.begin(); it != workers_.end();) {
    if (it->done->load()) {
      it->thread.join();
      it = workers_.erase(it);
    } else {
      ++it;
    }
  }
}

void SimAsset::accept_loop() {
  while (running_) {
    net::Fd conn = net::accept_connection(listener_.get());
    if (!conn.valid()) break;
    ++connections_;
    std::lock_guard lock(conn_mu_);
    reap_finished();
    open_fds_.push_back(conn.get());
    auto done = std::make_shared<std::atomic<bool>>(false);
    std::thread t([this, done, c = std::move(conn)]() mutable {
      serve(c.get());
      {
        std::lock_guard inner(conn_mu_);
        open_fds_.erase(std::find(open_fds_.begin(), open_fds_.end(), c.get()));
      }
      c.reset();
      done->store(true);
    });
    workers_.push_back({std::move(t), std::move(done)});
  }
}

void SimAsset::serve(int fd) {
  Staging staging;  // dies with the connection
  while (running_) {
    auto r = modbus::read_frame(fd, 500);
    if (r.status == net::IoStatus::Timeout) continue;
    if (r.status == net::IoStatus::Closed) return;
    ++frames_received_;
    if (!r.frame) continue;
    auto resp = handle_request(*r.frame, staging);
    if (resp && !net::write_all(fd, modbus::encode(*resp))) return;
  }
}

bool SimAsset::is_illegal(std::uint32_t lo, std::uint32_t hi) const {
  return std::any_of(config_.illegal_ranges.begin(), config_.illegal_ranges.end(),
                     [&](const secmgr::AddressRange& r) { return r.intersects(lo, hi); });
}

std::optional<modbus::Frame> SimAsset::handle_request(const modbus::Frame& req, Staging& staging) {
  const auto& b = req.body;
  switch (req.function) {
    case modbus::kReadHolding:
      if (b.size() != 4) return std::nullopt;
      return on_read(req);
    case modbus::kWriteMultiple:
      if (b.size() < 5 || b.size() != 5u + b[4]) return std::nullopt;
      return on_write(req);
    case modbus::kFirmwareChunk:
      if (b.size() < 2) return std::nullopt;
      return on_chunk(req, staging);
    case modbus::kFirmwareCommit:
      if (b.size() != 2) return std::nullopt;
      return on_commit(req, staging);
    default:
      return modbus::exception_response(req, modbus::kExIllegalFunction);
  }
}

modbus::Frame SimAsset::on_read(const modbus::Frame& req) {
  const std::uint32_t addr = get_u16(req.body, 0);
  const std::uint32_t count = get_u16(req.body, 2);
  if (count == 0 || count > modbus::kMaxReadCount) {
    return modbus::exception_response(req, modbus::kExIllegalValue);
  }
  const std::uint32_t last = addr + count - 1;
  if (last >= kRegisterCount || is_illegal(addr, last)) {
    return modbus::exception_response(req, modbus::kExIllegalAddress);
  }
  modbus::Frame resp{req.transaction_id, 0, req.unit_id, req.function, {}};
  resp.body.push_back(static_cast<std::uint8_t>(count * 2));
  std::lock_guard lock(mu_);
  for (std::uint32_t a = addr; a <= last; ++a) put_u16(resp.body, registers_[a]);
  return resp;
}

modbus::Frame SimAsset::on_write(const modbus::Frame& req) {
  const std::uint32_t addr = get_u16(req.body, 0);
  const std::uint32_t count = get_u16(req.body, 2);
  if (count == 0 || count > modbus::kMaxWriteCount || req.body[4] != count * 2) {
    return modbus::exception_response(req, modbus::kExIllegalValue);
  }
  const std::uint32_t last = addr + count - 1;
  if (last >= kRegisterCount || is_illegal(addr, last)) {
    return modbus::exception_response(req, modbus::kExIllegalAddress);
  }
  {
    std::lock_guard lock(mu_);
    for (std::uint32_t i = 0; i < count; ++i) registers_[addr + i] = get_u16(req.body, 5 + 2 * i);
  }
  modbus::Frame resp{req.transaction_id, 0, req.unit_id, req.function, {}};
  resp.body.assign(req.body.begin(), req.body.begin() + 4);
  return resp;
}

std::optional<modbus::Frame> SimAsset::on_chunk(const modbus::Frame& req, Staging& staging) {
  const std::uint16_t index = get_u16(req.body, 0);
  const std::size_t size = req.body.size() - 2;
  if (size == 0 || size > modbus::kMaxChunk) {
    return modbus::exception_response(req, modbus::kExIllegalValue);
  }
  staging.chunks[index] = Bytes(req.body.begin() + 2, req.body.end());
  {
    std::lock_guard lock(mu_);
    if (drop_ack_ && *drop_ack_ == index) {
      drop_ack_.reset();
      return std::nullopt;
    }
  }
  modbus::Frame resp{req.transaction_id, 0, req.unit_id, req.function, {}};
  put_u16(resp.body, index);
  return resp;
}

modbus::Frame SimAsset::on_commit(const modbus::Frame& req, Staging& staging) {
  const std::uint16_t total = get_u16(req.body, 0);
  if (total == 0 || staging.chunks.size() != total ||
      staging.chunks.rbegin()->first != total - 1) {
    staging.chunks.clear();
    return modbus::exception_response(req, modbus::kExIllegalValue);
  }
  Bytes image;
  for (const auto& [index, part] : staging.chunks) image.insert(image.end(), part.begin(), part.end());
  staging.chunks.clear();
  const Bytes digest = crypto::sha256(image);
  {
    std::lock_guard lock(mu_);
    active_digest_ = digest;
  }
  modbus::Frame resp{req.transaction_id, 0, req.unit_id, req.function, {}};
  resp.body = crypto::hmac_sha256(config_.device_key, digest);
  return resp;
}

Bytes SimAsset::active_digest() const {
  std::lock_guard lock(mu_);
  return active_digest_;
}

void SimAsset::drop_ack_for_chunk(std::uint16_t index) {
  std::lock_guard lock(mu_);
  drop_ack_ = index;
}

#ifdef ECIG_TEST_HOOKS
std::vector<std::uint16_t> SimAsset::peek(std::uint32_t addr, std::size_t count) const {
  if (std::uint64_t{addr} + count > kRegisterCount) throw Error(Errc::OutOfRange);
  std::lock_guard lock(mu_);
  return {registers_.begin() + addr, registers_.begin() + addr + count};
}

void SimAsset::poke(std::uint32_t addr, const std::vector<std::uint16_t>& words) {
  if (std::uint64_t{addr} + words.size() > kRegisterCount) throw Error(Errc::OutOfRange);
  std::lock_guard lock(mu_);
  std::copy(words.begin(), words.end(), registers_.begin() + addr);
}
#endif

}  // namespace ecig::plcsim
