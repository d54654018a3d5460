#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ecig/core/bytes.hpp"

namespace ecig::cmdparse {

enum class CommandKind { Read, Write, Update, ReadS, WriteS, StoreS, GenThreatProfileS };

constexpr CommandKind kAllKinds[] = {CommandKind::Read,   CommandKind::Write,  CommandKind::Update,
                                     CommandKind::ReadS,  CommandKind::WriteS, CommandKind::StoreS,
                                     CommandKind::GenThreatProfileS};

// The verb as typed: "read", "write_s", "gen_threat_profile_s", ...
const char* to_string(CommandKind kind) noexcept;
std::optional<CommandKind> kind_from_verb(std::string_view verb) noexcept;

// True for the *_s family, which carries a key.
bool is_secured(CommandKind kind) noexcept;

struct ValidatedCommand {
  CommandKind kind = CommandKind::Read;
  std::optional<Bytes> key;
  std::optional<std::uint32_t> asset_id;
  std::optional<std::uint16_t> addr;
  std::optional<std::uint16_t> length;
  std::optional<std::vector<std::uint16_t>> data;
  std::optional<std::string> filename;

  bool operator==(const ValidatedCommand&) const = default;
};

// Grammar, one command per line, tokens separated by blanks:
//   read <asset> <addr> <length>
//   write <asset> <addr> <length> <word>...
//   update <asset> <filename>
//   read_s <key> <asset> <addr> <length>
//   write_s <key> <asset> <addr> <length> <word>...
//   store_s <key> <asset>
//   gen_threat_profile_s <key>
// Numbers are decimal or 0x-prefixed hex; addr and length fit in 16 bits,
// length >= 1, asset >= 1. Words are exactly four hex digits. Keys are 64
// hex digits.
//
// Throws Error with one of EmptyInput, UnknownVerb, ArityMismatch,
// BadNumber, LengthMismatch, BadHex, BadKeyLength.
ValidatedCommand parse(std::string_view line);

// Canonical text form; parse(render(c)) == c.
std::string render(const ValidatedCommand& cmd);

}  // namespace ecig::cmdparse
