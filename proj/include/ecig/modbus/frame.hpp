#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "ecig/core/bytes.hpp"
#include "ecig/core/socket.hpp"

// Modbus-TCP application framing shared by the client and the simulator.
namespace ecig::modbus {

constexpr std::uint8_t kReadHolding = 0x03;
constexpr std::uint8_t kWriteMultiple = 0x10;
constexpr std::uint8_t kFirmwareChunk = 100;
constexpr std::uint8_t kFirmwareCommit = 101;

constexpr std::uint8_t kExIllegalFunction = 0x01;
constexpr std::uint8_t kExIllegalAddress = 0x02;
constexpr std::uint8_t kExIllegalValue = 0x03;

constexpr std::uint16_t kMaxReadCount = 125;
constexpr std::uint16_t kMaxWriteCount = 123;
constexpr std::size_t kMaxChunk = 1024;

constexpr std::size_t kMbapSize = 7;
// Largest MBAP length accepted; a firmware chunk is unit + fc + index + 1024.
constexpr std::uint16_t kMaxMbapLength = 1 + 1 + 2 + kMaxChunk;

struct Frame {
  std::uint16_t transaction_id = 0;
  std::uint16_t protocol_id = 0;
  std::uint8_t unit_id = 1;
  std::uint8_t function = 0;
  Bytes body;

  bool is_exception() const { return (function & 0x80) != 0; }
  bool operator==(const Frame&) const = default;
};

Bytes encode(const Frame& f);

// Decodes exactly one frame occupying all of `wire`; nullopt when the MBAP
// header is inconsistent with the byte count or the protocol id is not 0.
std::optional<Frame> decode(ByteView wire);

Frame read_request(std::uint16_t txn, std::uint8_t unit, std::uint16_t addr, std::uint16_t count);
Frame write_request(std::uint16_t txn, std::uint8_t unit, std::uint16_t addr,
                    const std::vector<std::uint16_t>& words);
Frame chunk_request(std::uint16_t txn, std::uint8_t unit, std::uint16_t index, ByteView payload);
Frame commit_request(std::uint16_t txn, std::uint8_t unit, std::uint16_t chunk_count);
Frame exception_response(const Frame& request, std::uint8_t code);

std::vector<std::uint16_t> words_from(ByteView bytes);
Bytes bytes_from(const std::vector<std::uint16_t>& words);

struct ReadResult {
  net::IoStatus status = net::IoStatus::Closed;
  // Empty with status Ok when a frame arrived but was malformed.
  std::optional<Frame> frame;
};

// Reads one frame from a stream. A length field outside [2, kMaxMbapLength]
// leaves the stream unsynchronized and is reported as Closed.
ReadResult read_frame(int fd, int timeout_ms);

}  // namespace ecig::modbus
