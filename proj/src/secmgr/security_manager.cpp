#include "ecig/secmgr/security_manager.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "ecig/core/error.hpp"

namespace ecig::secmgr {

using nlohmann::json;

namespace {

Bytes parse_key_hex(const std::string& hex, const std::string& what) {
  auto key = from_hex(hex);
  if (!key || key->size() != kKeySize) {
    throw Error(Errc::BadConfig, what + " must be 64 hex characters");
  }
  return *key;
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  if (path.is_relative() && !base.empty()) return base / path;
  return path;
}

std::string hex16(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "0x%04X", v);
  return buf;
}

CallerInfo caller_from(const json& j) {
  CallerInfo c;
  c.principal = j.value("principal", std::string("system"));
  if (j.contains("flow")) c.flow = j["flow"].get<std::uint64_t>();
  return c;
}

json parse_request(const worldlink::Parameter& p) {
  try {
    return json::parse(p.payload.begin(), p.payload.end());
  } catch (const json::exception& e) {
    throw Error(Errc::ProtocolError, std::string("bad request payload: ") + e.what());
  }
}

void require_layout(std::span<worldlink::Parameter> params,
                    std::initializer_list<worldlink::ParamDirection> dirs) {
  if (params.size() != dirs.size()) throw Error(Errc::ProtocolError, "wrong parameter count");
  std::size_t i = 0;
  for (auto d : dirs) {
    const auto actual = params[i++].direction;
    const bool in_ok = d == worldlink::ParamDirection::In && actual == d;
    const bool out_ok = d != worldlink::ParamDirection::In &&
                        actual != worldlink::ParamDirection::In;
    if (!in_ok && !out_ok) throw Error(Errc::ProtocolError, "wrong parameter direction");
  }
}

void write_out(worldlink::Parameter& p, const std::string& s) { p.payload = to_bytes(s); }

}  // namespace

void AssetPolicy::check() const {
  const auto& l = layout;
  const std::string who = "asset " + std::to_string(l.asset_id);
  if (l.asset_id == 0) throw Error(Errc::BadConfig, "asset ids must be positive");
  if (l.register_space.lo > l.register_space.hi || l.register_space.hi > 0xFFFF) {
    throw Error(Errc::BadConfig, who + ": bad register space");
  }
  auto ranges = l.confidential_ranges;
  std::sort(ranges.begin(), ranges.end(),
            [](const AddressRange& a, const AddressRange& b) { return a.lo < b.lo; });
  for (std::size_t i = 0; i < ranges.size(); ++i) {
    const auto& r = ranges[i];
    if (r.lo > r.hi) throw Error(Errc::BadConfig, who + ": confidential range with lo > hi");
    if (r.lo < l.register_space.lo || r.hi > l.register_space.hi) {
      throw Error(Errc::BadConfig, who + ": confidential range outside register space");
    }
    if (i > 0 && ranges[i - 1].hi >= r.lo) {
      throw Error(Errc::BadConfig, who + ": confidential ranges overlap");
    }
  }
  if (device_key.size() != kKeySize) throw Error(Errc::BadConfig, who + ": device key size");
}

SecureConfig SecureConfig::load(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(Errc::BadConfig, "cannot read " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), file.parent_path());
}

SecureConfig SecureConfig::parse(const std::string& text, const std::filesystem::path& base_dir) {
  SecureConfig cfg;
  try {
    const json j = json::parse(text);
    cfg.endpoint = j.at("listen").get<std::string>();
    cfg.mode = worldlink::mode_from_string(j.value("mode", std::string("normal")));
    cfg.hash = crypto::hash_algorithm_from_string(j.value("hash", std::string("sha1")));
    cfg.storage_dir = resolve(base_dir, j.at("storage_dir").get<std::string>());
    cfg.audit_log = j.contains("audit_log") ? resolve(base_dir, j["audit_log"].get<std::string>())
                                            : cfg.storage_dir / "sw_audit.log";
    cfg.audit_max_bytes = j.value("audit_max_bytes", std::uint64_t{0});
    for (const auto& [name, hex] : j.at("role_keys").items()) {
      auto role = role_from_string(name);
      if (!role) throw Error(Errc::BadConfig, "unknown role '" + name + "'");
      cfg.role_keys[*role] = parse_key_hex(hex.get<std::string>(), "role key " + name);
    }
    for (Role r : kAllRoles) {
      if (!cfg.role_keys.count(r)) {
        throw Error(Errc::BadConfig, std::string("missing key for role ") + to_string(r));
      }
    }
    for (const auto& a : j.at("assets")) {
      AssetPolicy p;
      p.layout.asset_id = a.at("id").get<std::uint32_t>();
      p.layout.endpoint = a.at("endpoint").get<std::string>();
      p.layout.unit_id = a.value("unit", std::uint8_t{1});
      p.layout.register_space = {a.at("register_space").at(0).get<std::uint32_t>(),
                                 a.at("register_space").at(1).get<std::uint32_t>()};
      for (const auto& r : a.value("confidential", json::array())) {
        p.layout.confidential_ranges.push_back({r.at(0).get<std::uint32_t>(),
                                                r.at(1).get<std::uint32_t>()});
      }
      p.device_key = parse_key_hex(a.at("device_key").get<std::string>(), "device key");
      p.check();
      for (const auto& existing : cfg.assets) {
        if (existing.layout.asset_id == p.layout.asset_id) {
          throw Error(Errc::BadConfig, "duplicate asset id " + std::to_string(p.layout.asset_id));
        }
      }
      cfg.assets.push_back(std::move(p));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::BadConfig, e.what());
  }
  return cfg;
}

SecurityManager::SecurityManager(SecureConfig config, audit::AuditLog& log)
    : config_(std::move(config)), log_(log) {
  std::filesystem::create_directories(config_.storage_dir);
}

const AssetPolicy* SecurityManager::find(std::uint32_t asset_id) const {
  for (const auto& p : config_.assets) {
    if (p.layout.asset_id == asset_id) return &p;
  }
  return nullptr;
}

void SecurityManager::record(const CallerInfo& caller, const std::string& activity,
                             audit::Outcome outcome, const std::string& detail,
                             std::optional<std::string> reason) {
  audit::AuditRecord rec;
  rec.principal = caller.principal;
  rec.activity = activity;
  rec.outcome = outcome;
  rec.detail = detail;
  rec.flow = caller.flow;
  rec.reason = std::move(reason);
  log_.append(std::move(rec));
}

AccessDecision SecurityManager::validate_address(std::uint32_t asset_id, std::uint32_t addr,
                                                 std::uint32_t length, Access access,
                                                 Privilege privilege, const CallerInfo& caller) {
  const std::string detail = "asset=" + std::to_string(asset_id) + " addr=" + hex16(addr) +
                             " length=" + std::to_string(length) + " access=" +
                             to_string(access) + " privilege=" + to_string(privilege);
  const AssetPolicy* policy = find(asset_id);
  if (!policy) {
    record(caller, "validate_address", audit::Outcome::Failed, detail, "UnknownAsset");
    throw Error(Errc::UnknownAsset, std::to_string(asset_id));
  }
  if (length == 0) {
    record(caller, "validate_address", audit::Outcome::Failed, detail, "ZeroLength");
    throw Error(Errc::ZeroLength);
  }

  const auto& layout = policy->layout;
  const std::uint64_t last = std::uint64_t{addr} + length - 1;
  AccessDecision decision = AccessDecision::allow();
  if (addr < layout.register_space.lo || last > layout.register_space.hi) {
    decision = AccessDecision::deny(DenyReason::OutOfRange);
  } else if (privilege == Privilege::NonConfidentialOnly) {
    for (const auto& r : layout.confidential_ranges) {
      if (r.intersects(addr, static_cast<std::uint32_t>(last))) {
        decision = AccessDecision::deny(DenyReason::ConfidentialOverlap);
        break;
      }
    }
  }
  record(caller, "validate_address",
         decision.allowed() ? audit::Outcome::Ok : audit::Outcome::Denied, detail,
         decision.reason() ? std::optional<std::string>(to_string(*decision.reason()))
                           : std::nullopt);
  return decision;
}

AccessDecision SecurityManager::validate_key(ByteView presented, Role required,
                                             const CallerInfo& caller) {
  const Bytes& stored = config_.role_keys.at(required);
  // Compare over the stored key length even when the presented key is short.
  Bytes candidate(kKeySize, 0);
  std::copy_n(presented.begin(), std::min(presented.size(), kKeySize), candidate.begin());
  const bool match = crypto::constant_time_equal(candidate, stored) && presented.size() == kKeySize;
  const auto decision = match ? AccessDecision::allow() : AccessDecision::deny(DenyReason::BadKey);
  record(caller, "validate_key", match ? audit::Outcome::Ok : audit::Outcome::Denied,
         std::string("role=") + to_string(required),
         match ? std::nullopt : std::optional<std::string>("BadKey"));
  return decision;
}

AccessDecision SecurityManager::verify_firmware_proof(std::uint32_t asset_id,
                                                      ByteView image_digest, ByteView proof,
                                                      const CallerInfo& caller) {
  const std::string detail = "asset=" + std::to_string(asset_id) +
                             " digest=" + to_hex(image_digest);
  const AssetPolicy* policy = find(asset_id);
  if (!policy) {
    record(caller, "verify_firmware_proof", audit::Outcome::Failed, detail, "UnknownAsset");
    throw Error(Errc::UnknownAsset, std::to_string(asset_id));
  }
  AccessDecision decision = AccessDecision::allow();
  if (image_digest.empty()) {
    decision = AccessDecision::deny(DenyReason::ZeroLength);
  } else {
    const Bytes expected = crypto::hmac_sha256(policy->device_key, image_digest);
    if (!crypto::constant_time_equal(expected, proof)) {
      decision = AccessDecision::deny(DenyReason::ProofInvalid);
    }
  }
  record(caller, "verify_firmware_proof",
         decision.allowed() ? audit::Outcome::Ok : audit::Outcome::Denied, detail,
         decision.reason() ? std::optional<std::string>(to_string(*decision.reason()))
                           : std::nullopt);
  return decision;
}

AssetLayout SecurityManager::validate_asset(std::uint32_t asset_id, const CallerInfo& caller) {
  const AssetPolicy* policy = find(asset_id);
  const std::string detail = "asset=" + std::to_string(asset_id);
  if (!policy) {
    record(caller, "validate_asset", audit::Outcome::Denied, detail, "UnknownAsset");
    throw Error(Errc::UnknownAsset, std::to_string(asset_id));
  }
  record(caller, "validate_asset", audit::Outcome::Ok, detail);
  return policy->layout;
}

Bytes SecurityManager::issue_storage_key(bool attested_session, const CallerInfo& caller) {
  if (!attested_session) {
    record(caller, "issue_storage_key", audit::Outcome::Denied, "", "SessionNotAttested");
    throw Error(Errc::SessionNotAttested);
  }
  const auto path = config_.storage_dir / "storage.key";
  std::ifstream in(path, std::ios::binary);
  if (in) {
    Bytes key((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (key.size() != kKeySize) throw Error(Errc::StorageError, "sealed storage key corrupt");
    record(caller, "issue_storage_key", audit::Outcome::Ok, "existing");
    return key;
  }
  Bytes key = crypto::random_bytes(kKeySize);
  const auto tmp = path.string() + ".tmp";
  const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0600);
  if (fd < 0) throw Error(Errc::StorageError, "cannot create " + tmp);
  const bool ok = ::write(fd, key.data(), key.size()) == static_cast<ssize_t>(key.size());
  ::close(fd);
  if (!ok) throw Error(Errc::StorageError, "cannot write " + tmp);
  std::filesystem::rename(tmp, path);
  record(caller, "issue_storage_key", audit::Outcome::Ok, "generated");
  return key;
}

AssetLayout SecurityManager::layout_of(std::uint32_t asset_id) const {
  const AssetPolicy* policy = find(asset_id);
  if (!policy) throw Error(Errc::UnknownAsset, std::to_string(asset_id));
  return policy->layout;
}

std::uint64_t SecurityManager::secure_audit(audit::AuditRecord record) {
  return log_.append(std::move(record));
}

void SecurityManagerTa::invoke(const worldlink::SessionInfo& session, std::uint32_t command_id,
                               std::span<worldlink::Parameter> params) {
  using D = worldlink::ParamDirection;
  switch (static_cast<TaCommand>(command_id)) {
    case TaCommand::Echo: {
      require_layout(params, {D::In, D::Out});
      params[1].payload = params[0].payload;
      return;
    }
    case TaCommand::ValidateAddress: {
      require_layout(params, {D::In, D::Out});
      const json req = parse_request(params[0]);
      try {
        const auto access = req.at("access").get<std::string>() == "Write" ? Access::Write
                                                                           : Access::Read;
        const auto privilege = req.at("privilege").get<std::string>() == "Full"
                                   ? Privilege::Full
                                   : Privilege::NonConfidentialOnly;
        const auto asset = req.at("asset").get<std::uint32_t>();
        const auto decision =
            sm_.validate_address(asset, req.at("addr").get<std::uint32_t>(),
                                 req.at("length").get<std::uint32_t>(), access, privilege,
                                 caller_from(req));
        json out = json::parse(decision.encode());
        if (decision.allowed()) {
          // Where the normal world may connect for this window.
          const AssetLayout layout = sm_.layout_of(asset);
          out["route"] = {{"endpoint", layout.endpoint}, {"unit", layout.unit_id}};
        }
        write_out(params[1], out.dump());
      } catch (const json::exception& e) {
        throw Error(Errc::ProtocolError, e.what());
      }
      return;
    }
    case TaCommand::ValidateKey: {
      require_layout(params, {D::In, D::In, D::Out});
      const json req = parse_request(params[1]);
      const auto role = role_from_string(req.value("role", std::string{}));
      if (!role) throw Error(Errc::ProtocolError, "unknown role");
      write_out(params[2], sm_.validate_key(params[0].payload, *role, caller_from(req)).encode());
      return;
    }
    case TaCommand::VerifyFirmwareProof: {
      require_layout(params, {D::In, D::In, D::In, D::Out});
      const json req = parse_request(params[0]);
      const auto decision =
          sm_.verify_firmware_proof(req.value("asset", 0u), params[1].payload,
                                    params[2].payload, caller_from(req));
      write_out(params[3], decision.encode());
      return;
    }
    case TaCommand::IssueStorageKey: {
      require_layout(params, {D::In, D::Out});
      const json req = parse_request(params[0]);
      params[1].payload = sm_.issue_storage_key(session.attested, caller_from(req));
      return;
    }
    case TaCommand::SecureAudit: {
      require_layout(params, {D::In, D::Out});
      const std::string line(params[0].payload.begin(), params[0].payload.end());
      const auto seq = sm_.secure_audit(audit::decode_line(line));
      write_out(params[1], std::to_string(seq));
      return;
    }
    case TaCommand::ValidateAsset: {
      require_layout(params, {D::In, D::Out});
      const json req = parse_request(params[0]);
      write_out(params[1], sm_.validate_asset(req.value("asset", 0u), caller_from(req)).encode());
      return;
    }
  }
  throw Error(Errc::ProtocolError, "unknown command " + std::to_string(command_id));
}

}  // namespace ecig::secmgr
