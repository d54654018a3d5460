#pragma once

#include <cstdint>
#include <functional>
#include <mutex>
#include <string>
#include <vector>

#include "ecig/core/bytes.hpp"
#include "ecig/core/error.hpp"
#include "ecig/core/socket.hpp"

namespace ecig::netclient {

constexpr int kDefaultTimeoutMs = 2000;

// The asset answered with a Modbus exception.
class ExceptionResponse : public Error {
 public:
  explicit ExceptionResponse(std::uint8_t code)
      : Error(Errc::ExceptionResponse, "exception code " + std::to_string(code)),
        exception_code_(code) {}
  std::uint8_t exception_code() const noexcept { return exception_code_; }

 private:
  std::uint8_t exception_code_;
};

enum class ConnectionState { Connected, Disconnected };

// One Modbus-TCP connection to one asset. Transactions are strictly
// sequential; the mutex makes pipelining impossible even across threads.
class AssetConnection {
 public:
  // Throws Error(ConnectRefused), Error(Timeout), Error(BadConfig).
  AssetConnection(std::uint32_t asset_id, const std::string& endpoint, std::uint8_t unit_id = 1,
                  int timeout_ms = kDefaultTimeoutMs);
  ~AssetConnection() = default;
  AssetConnection(const AssetConnection&) = delete;
  AssetConnection& operator=(const AssetConnection&) = delete;

  // Throws CountTooLarge, ExceptionResponse, Timeout, NotConnected, NetworkError.
  std::vector<std::uint16_t> read_registers(std::uint16_t addr, std::uint16_t count);

  // Throws CountTooLarge (also for an empty list), ExceptionResponse, Timeout,
  // NotConnected, NetworkError.
  void write_registers(std::uint16_t addr, const std::vector<std::uint16_t>& words);

  // Sends the image in chunks of at most 1024 bytes, then commits. Returns the
  // asset's 32-byte install proof. Throws TransferError, Timeout, NotConnected.
  Bytes transfer_firmware(ByteView image);

  void disconnect();

  std::uint32_t asset_id() const { return asset_id_; }
  const std::string& endpoint() const { return endpoint_; }
  ConnectionState state() const;
  std::uint16_t next_transaction_id() const;
  std::size_t discarded_responses() const;

  // Sees (and may rewrite) every encoded request just before it is sent.
  using FrameTap = std::function<void(Bytes& wire)>;
  void set_outbound_tap(FrameTap tap);

 private:
  // Sends one request and waits for the response carrying its transaction id.
  // Returns false on timeout.
  bool transact(std::uint8_t function, Bytes body, Bytes& response_body, bool& exception);

  std::uint32_t asset_id_;
  std::string endpoint_;
  std::uint8_t unit_id_;
  int timeout_ms_;
  mutable std::mutex mu_;
  net::Fd fd_;
  std::uint16_t txn_ = 1;
  std::size_t discarded_ = 0;
  FrameTap tap_;
};

}  // namespace ecig::netclient
