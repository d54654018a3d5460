#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "ecig/actmgr/activity_manager.hpp"
#include "ecig/core/bytes.hpp"
#include "ecig/core/clock.hpp"

namespace ecig::gateway {

struct UserEntry {
  std::string user_id;
  secmgr::Role role = secmgr::Role::ThirdParty;
  Bytes salt;
  Bytes hash;  // PBKDF2-HMAC-SHA256(password, salt, iterations), 32 bytes
  int iterations = 100000;
};

// Users file: {"users": [{"id", "role", "salt", "hash", "iterations"}]}
// with salt and hash in hex. Provisioned offline with make_entry.
class UserStore {
 public:
  static UserStore load(const std::filesystem::path& file);  // throws BadConfig
  static UserStore parse(const std::string& text);

  static UserEntry make_entry(const std::string& user_id, secmgr::Role role,
                              const std::string& password, int iterations = 100000);
  static std::string dump(const std::vector<UserEntry>& users);

  // Unknown users cost the same key derivation as known ones.
  std::optional<actmgr::Principal> verify(const std::string& user_id,
                                          const std::string& password) const;

 private:
  std::map<std::string, UserEntry> users_;
};

struct AuthToken {
  std::string token;  // 64 hex characters
  actmgr::Principal principal;
  std::int64_t issued_at_ms = 0;
  std::int64_t expires_at_ms = 0;
};

class TokenTable {
 public:
  TokenTable(const Clock& clock, std::int64_t ttl_ms) : clock_(clock), ttl_ms_(ttl_ms) {}

  AuthToken issue(const actmgr::Principal& who);
  std::optional<actmgr::Principal> lookup(const std::string& token);

 private:
  const Clock& clock_;
  std::int64_t ttl_ms_;
  std::mutex mu_;
  std::map<std::string, AuthToken> tokens_;
};

}  // namespace ecig::gateway
