#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ecig/core/bytes.hpp"

namespace ecig::worldlink {

enum class ParamDirection { In, Out, InOut };

// A shared-buffer parameter. Out and InOut payloads are rewritten by the
// secure world before the invocation returns; In payloads never change.
struct Parameter {
  ParamDirection direction = ParamDirection::In;
  Bytes payload;

  static Parameter in(Bytes payload) { return {ParamDirection::In, std::move(payload)}; }
  static Parameter out() { return {ParamDirection::Out, {}}; }
  static Parameter in_out(Bytes payload) { return {ParamDirection::InOut, std::move(payload)}; }

  bool operator==(const Parameter&) const = default;
};

constexpr std::size_t kMaxParameters = 4;

// Command id plus at most four parameters; a fifth is rejected at
// construction with Error(TooManyParameters).
class WorldCommand {
 public:
  explicit WorldCommand(std::uint32_t command_id, std::vector<Parameter> params = {});

  std::uint32_t id() const noexcept { return id_; }
  const std::vector<Parameter>& params() const noexcept { return params_; }

  // Only Out/InOut slots may be rewritten.
  void set_payload(std::size_t index, Bytes payload);

 private:
  std::uint32_t id_;
  std::vector<Parameter> params_;
};

enum class MessageKind {
  InitializeContext,
  OpenSession,
  InvokeCommand,
  CloseSession,
  FinalizeContext,
  Train,
  Reply,
};

const char* to_string(MessageKind kind) noexcept;

// One call or return crossing the world boundary. Ids and payloads travel
// hex-encoded; unset optionals are omitted from the body.
struct Message {
  MessageKind kind = MessageKind::Reply;
  std::optional<std::uint64_t> context_id;
  std::optional<std::uint64_t> session_id;
  std::optional<std::string> ta_id;
  std::optional<std::string> image_path;
  std::optional<std::uint32_t> command_id;
  std::vector<Parameter> params;
  // Replies only: "Ok" or an error code name, and where it came from
  // ("comms", "tee" or "ta").
  std::optional<std::string> status;
  std::optional<std::string> origin;
  std::optional<bool> attested;
  std::optional<std::string> detail;

  bool operator==(const Message&) const = default;
};

constexpr std::size_t kFrameHeaderSize = 4;
constexpr std::size_t kMaxFrameBody = 16u << 20;

// Frame = 4-byte big-endian body length + UTF-8 JSON body with sorted keys.
Bytes encode_frame(const Message& msg);
// Throws Error(ProtocolError) on malformed input.
Message decode_body(ByteView body);
Message decode_frame(ByteView frame);

// Blocking I/O on a stream socket. read_message returns nullopt on EOF.
std::optional<Message> read_message(int fd);
void write_message(int fd, const Message& msg);

}  // namespace ecig::worldlink
