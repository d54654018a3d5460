#include "ecig/gateway/users.hpp"

#include <fstream>
#include <json.hpp>
#include <sstream>

#include "ecig/core/crypto.hpp"
#include "ecig/core/error.hpp"

namespace ecig::gateway {

using nlohmann::json;

namespace {
constexpr std::size_t kHashSize = 32;
}

UserStore UserStore::load(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(Errc::BadConfig, "cannot read " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

UserStore UserStore::parse(const std::string& text) {
  UserStore store;
  try {
    const json j = json::parse(text);
    for (const auto& u : j.at("users")) {
      UserEntry e;
      e.user_id = u.at("id").get<std::string>();
      const auto role = secmgr::role_from_string(u.at("role").get<std::string>());
      if (!role) throw Error(Errc::BadConfig, "unknown role for user " + e.user_id);
      e.role = *role;
      auto salt = from_hex(u.at("salt").get<std::string>());
      auto hash = from_hex(u.at("hash").get<std::string>());
      if (!salt || !hash || hash->size() != kHashSize) {
        throw Error(Errc::BadConfig, "bad credential hash for user " + e.user_id);
      }
      e.salt = *salt;
      e.hash = *hash;
      e.iterations = u.value("iterations", 100000);
      store.users_[e.user_id] = std::move(e);
    }
  } catch (const json::exception& e) {
    throw Error(Errc::BadConfig, e.what());
  }
  return store;
}

UserEntry UserStore::make_entry(const std::string& user_id, secmgr::Role role,
                                const std::string& password, int iterations) {
  UserEntry e;
  e.user_id = user_id;
  e.role = role;
  e.salt = crypto::random_bytes(16);
  e.iterations = iterations;
  e.hash = crypto::pbkdf2_sha256(password, e.salt, iterations, kHashSize);
  return e;
}

std::string UserStore::dump(const std::vector<UserEntry>& users) {
  json list = json::array();
  for (const auto& u : users) {
    list.push_back({{"id", u.user_id},
                    {"role", secmgr::to_string(u.role)},
                    {"salt", to_hex(u.salt)},
                    {"hash", to_hex(u.hash)},
                    {"iterations", u.iterations}});
  }
  return json{{"users", list}}.dump(2);
}

std::optional<actmgr::Principal> UserStore::verify(const std::string& user_id,
                                                   const std::string& password) const {
  static const Bytes dummy_salt(16, 0x5a);
  auto it = users_.find(user_id);
  if (it == users_.end()) {
    const int iterations = users_.empty() ? 100000 : users_.begin()->second.iterations;
    (void)crypto::pbkdf2_sha256(password, dummy_salt, iterations, kHashSize);
    return std::nullopt;
  }
  const auto& e = it->second;
  const Bytes derived = crypto::pbkdf2_sha256(password, e.salt, e.iterations, kHashSize);
  if (!crypto::constant_time_equal(derived, e.hash)) return std::nullopt;
  return actmgr::Principal{e.user_id, e.role};
}

AuthToken TokenTable::issue(const actmgr::Principal& who) {
  AuthToken t;
  t.token = to_hex(crypto::random_bytes(32));
  t.principal = who;
  t.issued_at_ms = clock_.now_ms();
  t.expires_at_ms = t.issued_at_ms + ttl_ms_;
  std::lock_guard lock(mu_);
  tokens_[t.token] = t;
  return t;
}

std::optional<actmgr::Principal> TokenTable::lookup(const std::string& token) {
  std::lock_guard lock(mu_);
  auto it = tokens_.find(token);
  if (it == tokens_.end()) return std::nullopt;
  if (clock_.now_ms() >= it->second.expires_at_ms) {
    tokens_.erase(it);
    return std::nullopt;
  }
  return it->second.principal;
}

}  // namespace ecig::gateway
