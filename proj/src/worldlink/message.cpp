#include "ecig/worldlink/message.hpp"

#include <array>
#include <cstdio>
#include <json.hpp>

#include "ecig/core/error.hpp"
#include "ecig/core/socket.hpp"

namespace ecig::worldlink {

using nlohmann::json;

namespace {

constexpr std::array<std::pair<MessageKind, const char*>, 7> kKinds{{
    {MessageKind::InitializeContext, "InitializeContext"},
    {MessageKind::OpenSession, "OpenSession"},
    {MessageKind::InvokeCommand, "InvokeCommand"},
    {MessageKind::CloseSession, "CloseSession"},
    {MessageKind::FinalizeContext, "FinalizeContext"},
    {MessageKind::Train, "Train"},
    {MessageKind::Reply, "Reply"},
}};

MessageKind kind_from_string(const std::string& s) {
  for (const auto& [k, name] : kKinds) {
    if (s == name) return k;
  }
  throw Error(Errc::ProtocolError, "unknown message kind '" + s + "'");
}

const char* direction_name(ParamDirection d) {
  switch (d) {
    case ParamDirection::In: return "in";
    case ParamDirection::Out: return "out";
    case ParamDirection::InOut: return "inout";
  }
  return "in";
}

ParamDirection direction_from_string(const std::string& s) {
  if (s == "in") return ParamDirection::In;
  if (s == "out") return ParamDirection::Out;
  if (s == "inout") return ParamDirection::InOut;
  throw Error(Errc::ProtocolError, "unknown parameter direction '" + s + "'");
}

std::string id_to_hex(std::uint64_t id) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(id));
  return buf;
}

std::uint64_t id_from_hex(const std::string& s) {
  auto bytes = from_hex(s);
  if (!bytes || bytes->size() != 8) throw Error(Errc::ProtocolError, "bad id '" + s + "'");
  std::uint64_t v = 0;
  for (auto b : *bytes) v = (v << 8) | b;
  return v;
}

Bytes payload_from_hex(const std::string& s) {
  auto bytes = from_hex(s);
  if (!bytes) throw Error(Errc::ProtocolError, "bad payload hex");
  return *bytes;
}

}  // namespace

WorldCommand::WorldCommand(std::uint32_t command_id, std::vector<Parameter> params)
    : id_(command_id), params_(std::move(params)) {
  if (params_.size() > kMaxParameters) {
    throw Error(Errc::TooManyParameters,
                std::to_string(params_.size()) + " parameters, limit is 4");
  }
}

void WorldCommand::set_payload(std::size_t index, Bytes payload) {
  auto& p = params_.at(index);
  if (p.direction == ParamDirection::In) {
    throw Error(Errc::ProtocolError, "In parameters are read-only");
  }
  p.payload = std::move(payload);
}

const char* to_string(MessageKind kind) noexcept {
  for (const auto& [k, name] : kKinds) {
    if (k == kind) return name;
  }
  return "Reply";
}

Bytes encode_frame(const Message& msg) {
  json j;
  j["kind"] = to_string(msg.kind);
  if (msg.context_id) j["context"] = id_to_hex(*msg.context_id);
  if (msg.session_id) j["session"] = id_to_hex(*msg.session_id);
  if (msg.ta_id) j["ta"] = *msg.ta_id;
  if (msg.image_path) j["image"] = *msg.image_path;
  if (msg.command_id) j["command"] = *msg.command_id;
  if (!msg.params.empty()) {
    json arr = json::array();
    for (const auto& p : msg.params) {
      arr.push_back({{"dir", direction_name(p.direction)}, {"data", to_hex(p.payload)}});
    }
    j["params"] = std::move(arr);
  }
  if (msg.status) j["status"] = *msg.status;
  if (msg.origin) j["origin"] = *msg.origin;
  if (msg.attested) j["attested"] = *msg.attested;
  if (msg.detail) j["detail"] = *msg.detail;

  const std::string body = j.dump();
  if (body.size() > kMaxFrameBody) throw Error(Errc::ProtocolError, "frame too large");
  Bytes frame;
  frame.reserve(kFrameHeaderSize + body.size());
  put_u32(frame, static_cast<std::uint32_t>(body.size()));
  frame.insert(frame.end(), body.begin(), body.end());
  return frame;
}

Message decode_body(ByteView body) {
  json j;
  try {
    j = json::parse(body.begin(), body.end());
  } catch (const json::exception& e) {
    throw Error(Errc::ProtocolError, std::string("unparseable frame body: ") + e.what());
  }
  if (!j.is_object()) throw Error(Errc::ProtocolError, "frame body is not an object");
  try {
    Message msg;
    msg.kind = kind_from_string(j.at("kind").get<std::string>());
    if (j.contains("context")) msg.context_id = id_from_hex(j["context"].get<std::string>());
    if (j.contains("session")) msg.session_id = id_from_hex(j["session"].get<std::string>());
    if (j.contains("ta")) msg.ta_id = j["ta"].get<std::string>();
    if (j.contains("image")) msg.image_path = j["image"].get<std::string>();
    if (j.contains("command")) msg.command_id = j["command"].get<std::uint32_t>();
    if (j.contains("params")) {
      for (const auto& p : j["params"]) {
        msg.params.push_back({direction_from_string(p.at("dir").get<std::string>()),
                              payload_from_hex(p.at("data").get<std::string>())});
      }
    }
    if (j.contains("status")) msg.status = j["status"].get<std::string>();
    if (j.contains("origin")) msg.origin = j["origin"].get<std::string>();
    if (j.contains("attested")) msg.attested = j["attested"].get<bool>();
    if (j.contains("detail")) msg.detail = j["detail"].get<std::string>();
    return msg;
  } catch (const json::exception& e) {
    throw Error(Errc::ProtocolError, std::string("bad frame field: ") + e.what());
  }
}

Message decode_frame(ByteView frame) {
  if (frame.size() < kFrameHeaderSize) throw Error(Errc::ProtocolError, "short frame");
  const std::uint32_t len = get_u32(frame, 0);
  if (len != frame.size() - kFrameHeaderSize) {
    throw Error(Errc::ProtocolError, "length prefix does not match frame size");
  }
  return decode_body(frame.subspan(kFrameHeaderSize));
}

std::optional<Message> read_message(int fd) {
  std::array<std::uint8_t, kFrameHeaderSize> header{};
  if (net::read_exact(fd, header.data(), header.size(), -1) != net::IoStatus::Ok) {
    return std::nullopt;
  }
  const std::uint32_t len = get_u32(header, 0);
  if (len > kMaxFrameBody) throw Error(Errc::ProtocolError, "frame too large");
  Bytes body(len);
  if (net::read_exact(fd, body.data(), body.size(), -1) != net::IoStatus::Ok) {
    return std::nullopt;
  }
  return decode_body(body);
}

void write_message(int fd, const Message& msg) {
  if (!net::write_all(fd, encode_frame(msg))) {
    throw Error(Errc::EndpointUnreachable, "secure world channel closed");
  }
}

}  // namespace ecig::worldlink
