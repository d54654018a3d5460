#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "ecig/core/bytes.hpp"
#include "ecig/core/socket.hpp"
#include "ecig/modbus/frame.hpp"
#include "ecig/secmgr/types.hpp"

namespace ecig::plcsim {

struct SimAssetConfig {
  std::uint32_t asset_id = 1;
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;  // 0 picks a free port
  std::vector<secmgr::AddressRange> illegal_ranges;
  std::map<std::uint16_t, std::vector<std::uint16_t>> preload;
  Bytes device_key;  // 32 bytes
};

// Reads {"assets": [...]} where each entry has id, listen ("host:port"),
// device_key (hex), optional illegal [[lo, hi]] and preload
// [{"addr": n, "words": [...]}]. Words may be integers or 4-digit hex
// strings. Throws Error(BadConfig).
std::vector<SimAssetConfig> load_fleet(const std::filesystem::path& file);
std::vector<SimAssetConfig> parse_fleet(const std::string& text);

// Firmware chunks received on one connection and not yet committed.
struct Staging {
  std::map<std::uint16_t, Bytes> chunks;
};

class SimAsset {
 public:
  explicit SimAsset(SimAssetConfig config);
  ~SimAsset();
  SimAsset(const SimAsset&) = delete;
  SimAsset& operator=(const SimAsset&) = delete;

  // Throws Error(BindFailure).
  void start();
  void stop();

  // Applies one request atomically. Empty for frames that get no answer
  // (malformed input, or a suppressed chunk ack).
  std::optional<modbus::Frame> handle_request(const modbus::Frame& request, Staging& staging);

  std::uint32_t asset_id() const { return config_.asset_id; }
  std::uint16_t port() const { return port_; }
  std::string endpoint() const { return config_.host + ":" + std::to_string(port_); }

  // SHA-256 of the last committed image; empty before the first commit.
  Bytes active_digest() const;
  std::size_t frames_received() const { return frames_received_.load(); }
  std::size_t connections_accepted() const { return connections_.load(); }

  // Fault injection: swallow the ack for the next chunk with this index.
  void drop_ack_for_chunk(std::uint16_t index);

#ifdef ECIG_TEST_HOOKS
  // Direct register access, bypassing the wire. Throws Error(OutOfRange).
  std::vector<std::uint16_t> peek(std::uint32_t addr, std::size_t count) const;
  void poke(std::uint32_t addr, const std::vector<std::uint16_t>& words);
#endif

 private:
  void accept_loop();
  void serve(int fd);
  bool is_illegal(std::uint32_t lo, std::uint32_t hi) const;
  modbus::Frame on_read(const modbus::Frame& req);
  modbus::Frame on_write(const modbus::Frame& req);
  std::optional<modbus::Frame> on_chunk(const modbus::Frame& req, Staging& staging);
  modbus::Frame on_commit(const modbus::Frame& req, Staging& staging);

  SimAssetConfig config_;
  std::uint16_t port_ = 0;

  mutable std::mutex mu_;
  std::vector<std::uint16_t> registers_;
  Bytes active_digest_;
  std::optional<std::uint16_t> drop_ack_;

  std::atomic<std::size_t> frames_received_{0};
  std::atomic<std::size_t> connections_{0};
  std::atomic<bool> running_{false};
  net::Fd listener_;
  std::thread acceptor_;
  std::mutex conn_mu_;
  std::vector<int> open_fds_;
  struct Worker {
    std::thread thread;
    std::shared_ptr<std::atomic<bool>> done;
  };
  void reap_finished();
  std::list<Worker> workers_;
};

}  // namespace ecig::plcsim
