#include "ecig/modbus/frame.hpp"

namespace ecig::modbus {

Bytes encode(const Frame& f) {
  Bytes out;
  out.reserve(kMbapSize + 1 + f.body.size());
  put_u16(out, f.transaction_id);
  put_u16(out, f.protocol_id);
  put_u16(out, static_cast<std::uint16_t>(2 + f.body.size()));
  out.push_back(f.unit_id);
  out.push_back(f.function);
  out.insert(out.end(), f.body.begin(), f.body.end());
  return out;
}

std::optional<Frame> decode(ByteView wire) {
  if (wire.size() < kMbapSize + 1) return std::nullopt;
  const std::uint16_t length = get_u16(wire, 4);
  if (length < 2 || wire.size() != 6u + length) return std::nullopt;
  Frame f;
  f.transaction_id = get_u16(wire, 0);
  f.protocol_id = get_u16(wire, 2);
  if (f.protocol_id != 0) return std::nullopt;
  f.unit_id = wire[6];
  f.function = wire[7];
  f.body.assign(wire.begin() + 8, wire.end());
  return f;
}

Frame read_request(std::uint16_t txn, std::uint8_t unit, std::uint16_t addr, std::uint16_t count) {
  Frame f{txn, 0, unit, kReadHolding, {}};
  put_u16(f.body, addr);
  put_u16(f.body, count);
  return f;
}

Frame write_request(std::uint16_t txn, std::uint8_t unit, std::uint16_t addr,
                    const std::vector<std::uint16_t>& words) {
  Frame f{txn, 0, unit, kWriteMultiple, {}};
  put_u16(f.body, addr);
  put_u16(f.body, static_cast<std::uint16_t>(words.size()));
  f.body.push_back(static_cast<std::uint8_t>(words.size() * 2));
  for (auto w : words) put_u16(f.body, w);
  return f;
}

Frame chunk_request(std::uint16_t txn, std::uint8_t unit, std::uint16_t index, ByteView payload) {
  Frame f{txn, 0, unit, kFirmwareChunk, {}};
  put_u16(f.body, index);
  f.body.insert(f.body.end(), payload.begin(), payload.end());
  return f;
}

Frame commit_request(std::uint16_t txn, std::uint8_t unit, std::uint16_t chunk_count) {
  Frame f{txn, 0, unit, kFirmwareCommit, {}};
  put_u16(f.body, chunk_count);
  return f;
}

Frame exception_response(const Frame& request, std::uint8_t code) {
  return Frame{request.transaction_id, 0, request.unit_id,
               static_cast<std::uint8_t>(request.function | 0x80), {code}};
}

std::vector<std::uint16_t> words_from(ByteView bytes) {
  std::vector<std::uint16_t> out;
  out.reserve(bytes.size() / 2);
  for (std::size_t i = 0; i + 1 < bytes.size(); i += 2) out.push_back(get_u16(bytes, i));
  return out;
}

Bytes bytes_from(const std::vector<std::uint16_t>& words) {
  Bytes out;
  out.reserve(words.size() * 2);
  for (auto w : words) put_u16(out, w);
  return out;
}

ReadResult read_frame(int fd, int timeout_ms) {
  std::uint8_t header[kMbapSize];
  ReadResult r;
  r.status = net::read_exact(fd, header, kMbapSize, timeout_ms);
  if (r.status != net::IoStatus::Ok) return r;
  const std::uint16_t length = static_cast<std::uint16_t>((header[4] << 8) | header[5]);
  if (length < 2 || length > kMaxMbapLength) {
    r.status = net::IoStatus::Closed;
    return r;
  }
  Bytes wire(header, header + kMbapSize);
  wire.resize(6u + length);
  r.status = net::read_exact(fd, wire.data() + kMbapSize, length - 1u, timeout_ms);
  if (r.status != net::IoStatus::Ok) return r;
  r.frame = decode(wire);
  return r;
}

}  // namespace ecig::modbus
