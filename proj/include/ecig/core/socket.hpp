#pragma once

#include <cstdint>
#include <string>
#include <utility>

#include "ecig/core/bytes.hpp"

namespace ecig::net {

// Owning POSIX descriptor.
class Fd {
 public:
  Fd() = default;
  explicit Fd(int fd) : fd_(fd) {}
  ~Fd() { reset(); }
  Fd(Fd&& other) noexcept : fd_(std::exchange(other.fd_, -1)) {}
  Fd& operator=(Fd&& other) noexcept {
    if (this != &other) {
      reset();
      fd_ = std::exchange(other.fd_, -1);
    }
    return *this;
  }
  Fd(const Fd&) = delete;
  Fd& operator=(const Fd&) = delete;

  int get() const noexcept { return fd_; }
  bool valid() const noexcept { return fd_ >= 0; }
  void reset() noexcept;
  // Wakes threads blocked on this descriptor without releasing it.
  void shutdown() noexcept;

 private:
  int fd_ = -1;
};

struct Endpoint {
  std::string host;
  std::uint16_t port = 0;

  std::string to_string() const { return host + ":" + std::to_string(port); }
  bool operator==(const Endpoint&) const = default;
};

// "host:port"; throws Error(BadConfig).
Endpoint parse_endpoint(const std::string& text);

enum class IoStatus { Ok, Closed, Timeout };

// timeout_ms < 0 blocks indefinitely.
IoStatus read_exact(int fd, std::uint8_t* out, std::size_t n, int timeout_ms);
bool write_all(int fd, ByteView data);

// Throws Error(EndpointUnreachable).
Fd connect_unix(const std::string& path);
// Throws Error(BindFailure). Removes a stale socket file first.
Fd listen_unix(const std::string& path);

// Throws Error(ConnectRefused) or Error(Timeout).
Fd connect_tcp(const Endpoint& ep, int timeout_ms);
// Throws Error(BindFailure). Port 0 selects an ephemeral port; the bound
// port is returned alongside the descriptor.
std::pair<Fd, std::uint16_t> listen_tcp(const std::string& host, std::uint16_t port);

// Returns an invalid Fd when the listener was shut down.
Fd accept_connection(int listen_fd);

}  // namespace ecig::net
