#include "ecig/cmdparse/command.hpp"

#include <cctype>
#include <cstdio>

#include "ecig/core/error.hpp"

namespace ecig::cmdparse {

namespace {

constexpr std::size_t kKeyHexDigits = 64;

std::vector<std::string_view> tokenize(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

bool is_hex_digit(char c) { return std::isxdigit(static_cast<unsigned char>(c)) != 0; }

std::uint64_t parse_number(std::string_view tok, std::uint64_t lo, std::uint64_t hi,
                           const char* what) {
  auto fail = [&] {
    return Error(Errc::BadNumber, std::string(what) + " '" + std::string(tok) + "'");
  };
  int base = 10;
  std::string_view digits = tok;
  if (tok.size() > 2 && tok[0] == '0' && (tok[1] == 'x' || tok[1] == 'X')) {
    base = 16;
    digits = tok.substr(2);
  }
  if (digits.empty() || digits.size() > 16) throw fail();
  std::uint64_t v = 0;
  for (char c : digits) {
    unsigned d;
    if (c >= '0' && c <= '9') {
      d = static_cast<unsigned>(c - '0');
    } else if (base == 16 && is_hex_digit(c)) {
      d = static_cast<unsigned>(std::tolower(static_cast<unsigned char>(c)) - 'a' + 10);
    } else {
      throw fail();
    }
    v = v * base + d;
    if (v > hi) throw fail();
  }
  if (v < lo) throw fail();
  return v;
}

Bytes parse_key(std::string_view tok) {
  for (char c : tok) {
    if (!is_hex_digit(c)) throw Error(Errc::BadHex, "key contains a non-hex character");
  }
  if (tok.size() != kKeyHexDigits) {
    throw Error(Errc::BadKeyLength, "key must be 64 hex digits, got " + std::to_string(tok.size()));
  }
  return *from_hex(tok);
}

std::uint16_t parse_word(std::string_view tok) {
  if (tok.size() != 4) throw Error(Errc::BadHex, "word '" + std::string(tok) + "'");
  std::uint16_t v = 0;
  for (char c : tok) {
    if (!is_hex_digit(c)) throw Error(Errc::BadHex, "word '" + std::string(tok) + "'");
    const int d = std::isdigit(static_cast<unsigned char>(c))
                      ? c - '0'
                      : std::tolower(static_cast<unsigned char>(c)) - 'a' + 10;
    v = static_cast<std::uint16_t>((v << 4) | d);
  }
  return v;
}

void expect_arity(const std::vector<std::string_view>& toks, std::size_t n) {
  if (toks.size() != n) {
    throw Error(Errc::ArityMismatch, std::string(toks[0]) + " takes " + std::to_string(n - 1) +
                                         " arguments, got " + std::to_string(toks.size() - 1));
  }
}

std::uint32_t asset_of(std::string_view tok) {
  return static_cast<std::uint32_t>(parse_number(tok, 1, 0xFFFFFFFFu, "asset id"));
}

std::uint16_t addr_of(std::string_view tok) {
  return static_cast<std::uint16_t>(parse_number(tok, 0, 0xFFFF, "address"));
}

std::uint16_t length_of(std::string_view tok) {
  return static_cast<std::uint16_t>(parse_number(tok, 1, 0xFFFF, "length"));
}

}  // namespace

const char* to_string(CommandKind kind) noexcept {
  switch (kind) {
    case CommandKind::Read: return "read";
    case CommandKind::Write: return "write";
    case CommandKind::Update: return "update";
    case CommandKind::ReadS: return "read_s";
    case CommandKind::WriteS: return "write_s";
    case CommandKind::StoreS: return "store_s";
    case CommandKind::GenThreatProfileS: return "gen_threat_profile_s";
  }
  return "read";
}

std::optional<CommandKind> kind_from_verb(std::string_view verb) noexcept {
  for (CommandKind k : kAllKinds) {
    if (verb == to_string(k)) return k;
  }
  return std::nullopt;
}

bool is_secured(CommandKind kind) noexcept {
  return kind == CommandKind::ReadS || kind == CommandKind::WriteS ||
         kind == CommandKind::StoreS || kind == CommandKind::GenThreatProfileS;
}

ValidatedCommand parse(std::string_view line) {
  const auto toks = tokenize(line);
  if (toks.empty()) throw Error(Errc::EmptyInput);
  if (line.find(';') != std::string_view::npos) {
    throw Error(Errc::ArityMismatch, "one command per request");
  }
  const auto kind = kind_from_verb(toks[0]);
  if (!kind) throw Error(Errc::UnknownVerb, std::string(toks[0]));

  ValidatedCommand cmd;
  cmd.kind = *kind;
  std::size_t at = 1;
  if (is_secured(*kind)) {
    if (toks.size() < 2) throw Error(Errc::ArityMismatch, "missing key");
    cmd.key = parse_key(toks[at++]);
  }

  switch (*kind) {
    case CommandKind::Read:
    case CommandKind::ReadS:
      expect_arity(toks, at + 3);
      cmd.asset_id = asset_of(toks[at]);
      cmd.addr = addr_of(toks[at + 1]);
      cmd.length = length_of(toks[at + 2]);
      break;
    case CommandKind::Write:
    case CommandKind::WriteS: {
      if (toks.size() < at + 3) {
        throw Error(Errc::ArityMismatch, std::string(toks[0]) + " needs asset, addr and length");
      }
      cmd.asset_id = asset_of(toks[at]);
      cmd.addr = addr_of(toks[at + 1]);
      cmd.length = length_of(toks[at + 2]);
      const std::size_t words = toks.size() - (at + 3);
      if (words != *cmd.length) {
        throw Error(Errc::LengthMismatch, "length " + std::to_string(*cmd.length) + " but " +
                                              std::to_string(words) + " data words");
      }
      std::vector<std::uint16_t> data;
      data.reserve(words);
      for (std::size_t i = at + 3; i < toks.size(); ++i) data.push_back(parse_word(toks[i]));
      cmd.data = std::move(data);
      break;
    }
    case CommandKind::Update:
      expect_arity(toks, 3);
      cmd.asset_id = asset_of(toks[1]);
      cmd.filename = std::string(toks[2]);
      break;
    case CommandKind::StoreS:
      expect_arity(toks, at + 1);
      cmd.asset_id = asset_of(toks[at]);
      break;
    case CommandKind::GenThreatProfileS:
      expect_arity(toks, at);
      break;
  }
  return cmd;
}

std::string render(const ValidatedCommand& cmd) {
  std::string out = to_string(cmd.kind);
  auto add = [&out](const std::string& s) {
    out += ' ';
    out += s;
  };
  if (cmd.key) add(to_hex(*cmd.key));
  if (cmd.asset_id) add(std::to_string(*cmd.asset_id));
  if (cmd.filename) add(*cmd.filename);
  char buf[8];
  if (cmd.addr) {
    std::snprintf(buf, sizeof(buf), "0x%04X", *cmd.addr);
    add(buf);
  }
  if (cmd.length) add(std::to_string(*cmd.length));
  if (cmd.data) {
    for (auto w : *cmd.data) {
      std::snprintf(buf, sizeof(buf), "%04X", w);
      add(buf);
    }
  }
  return out;
}

}  // namespace ecig::cmdparse
