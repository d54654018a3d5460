#include "ecig/netclient/connection.hpp"

#include <chrono>

#include "ecig/modbus/frame.hpp"

namespace ecig::netclient {

namespace {

using Clock = std::chrono::steady_clock;

int remaining_ms(Clock::time_point deadline) {
  const auto left =
      std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
  return left > 0 ? static_cast<int>(left) : 0;
}

}  // namespace

AssetConnection::AssetConnection(std::uint32_t asset_id, const std::string& endpoint,
                                 std::uint8_t unit_id, int timeout_ms)
    : asset_id_(asset_id), endpoint_(endpoint), unit_id_(unit_id), timeout_ms_(timeout_ms) {
  fd_ = net::connect_tcp(net::parse_endpoint(endpoint), timeout_ms_);
}

ConnectionState AssetConnection::state() const {
  std::lock_guard lock(mu_);
  return fd_.valid() ? ConnectionState::Connected : ConnectionState::Disconnected;
}

std::uint16_t AssetConnection::next_transaction_id() const {
  std::lock_guard lock(mu_);
  return txn_;
}

std::size_t AssetConnection::discarded_responses() const {
  std::lock_guard lock(mu_);
  return discarded_;
}

void AssetConnection::set_outbound_tap(FrameTap tap) {
  std::lock_guard lock(mu_);
  tap_ = std::move(tap);
}

void AssetConnection::disconnect() {
  std::lock_guard lock(mu_);
  fd_.reset();
}

bool AssetConnection::transact(std::uint8_t function, Bytes body, Bytes& response_body,
                               bool& exception) {
  if (!fd_.valid()) throw Error(Errc::NotConnected, "asset " + std::to_string(asset_id_));
  const std::uint16_t txn = txn_++;
  Bytes wire = modbus::encode(modbus::Frame{txn, 0, unit_id_, function, std::move(body)});
  if (tap_) tap_(wire);
  if (!net::write_all(fd_.get(), wire)) {
    fd_.reset();
    throw Error(Errc::NetworkError, "send failed");
  }
  const auto deadline = Clock::now() + std::chrono::milliseconds(timeout_ms_);
  for (;;) {
    const int left = remaining_ms(deadline);
    if (left == 0) return false;
    auto r = modbus::read_frame(fd_.get(), left);
    if (r.status == net::IoStatus::Timeout) return false;
    if (r.status == net::IoStatus::Closed) {
      fd_.reset();
      throw Error(Errc::NetworkError, "connection closed by asset");
    }
    if (!r.frame || r.frame->transaction_id != txn ||
        (r.frame->function & 0x7F) != function) {
      ++discarded_;
      continue;
    }
    exception = r.frame->is_exception();
    response_body = std::move(r.frame->body);
    return true;
  }
}

std::vector<std::uint16_t> AssetConnection::read_registers(std::uint16_t addr,
                                                           std::uint16_t count) {
  if (count == 0 || count > modbus::kMaxReadCount) {
    throw Error(Errc::CountTooLarge, "count " + std::to_string(count));
  }
  std::lock_guard lock(mu_);
  Bytes body;
  put_u16(body, addr);
  put_u16(body, count);
  Bytes resp;
  bool exception = false;
  if (!transact(modbus::kReadHolding, std::move(body), resp, exception)) {
    throw Error(Errc::Timeout, "read_registers");
  }
  if (exception) throw ExceptionResponse(resp.empty() ? 0 : resp[0]);
  if (resp.size() != 1u + 2u * count || resp[0] != 2u * count) {
    throw Error(Errc::NetworkError, "bad read response length");
  }
  return modbus::words_from(ByteView(resp).subspan(1));
}

void AssetConnection::write_registers(std::uint16_t addr, const std::vector<std::uint16_t>& words) {
  if (words.empty() || words.size() > modbus::kMaxWriteCount) {
    throw Error(Errc::CountTooLarge, "word count " + std::to_string(words.size()));
  }
  std::lock_guard lock(mu_);
  Bytes body = modbus::write_request(0, unit_id_, addr, words).body;
  Bytes resp;
  bool exception = false;
  if (!transact(modbus::kWriteMultiple, std::move(body), resp, exception)) {
    throw Error(Errc::Timeout, "write_registers");
  }
  if (exception) throw ExceptionResponse(resp.empty() ? 0 : resp[0]);
  if (resp.size() != 4 || get_u16(resp, 0) != addr || get_u16(resp, 2) != words.size()) {
    throw Error(Errc::NetworkError, "write echo mismatch");
  }
}

Bytes AssetConnection::transfer_firmware(ByteView image) {
  if (image.empty()) throw Error(Errc::TransferError, "empty image");
  const std::size_t chunks = (image.size() + modbus::kMaxChunk - 1) / modbus::kMaxChunk;
  if (chunks > 0xFFFF) throw Error(Errc::TransferError, "image too large");
  std::lock_guard lock(mu_);
  for (std::size_t i = 0; i < chunks; ++i) {
    const auto part = image.subspan(i * modbus::kMaxChunk,
                                    std::min(modbus::kMaxChunk, image.size() - i * modbus::kMaxChunk));
    Bytes body;
    put_u16(body, static_cast<std::uint16_t>(i));
    body.insert(body.end(), part.begin(), part.end());
    Bytes resp;
    bool exception = false;
    if (!transact(modbus::kFirmwareChunk, std::move(body), resp, exception)) {
      throw Error(Errc::TransferError, "no ack for chunk " + std::to_string(i));
    }
    if (exception || resp.size() != 2 || get_u16(resp, 0) != i) {
      throw Error(Errc::TransferError, "bad ack for chunk " + std::to_string(i));
    }
  }
  Bytes body;
  put_u16(body, static_cast<std::uint16_t>(chunks));
  Bytes resp;
  bool exception = false;
  if (!transact(modbus::kFirmwareCommit, std::move(body), resp, exception)) {
    throw Error(Errc::Timeout, "firmware commit");
  }
  if (exception) throw Error(Errc::TransferError, "commit rejected");
  if (resp.size() != 32) throw Error(Errc::TransferError, "bad proof length");
  return resp;
}

}  // namespace ecig::netclient
