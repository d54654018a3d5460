#include "ecig/secmgr/types.hpp"

#include <json.hpp>

#include "ecig/core/error.hpp"

namespace ecig::secmgr {

using nlohmann::json;

const char* to_string(Role role) noexcept {
  switch (role) {
    case Role::ThirdParty: return "ThirdParty";
    case Role::Engineer: return "Engineer";
    case Role::Administrator: return "Administrator";
    case Role::Scheduler: return "Scheduler";
  }
  return "ThirdParty";
}

std::optional<Role> role_from_string(std::string_view s) noexcept {
  for (Role r : kAllRoles) {
    if (s == to_string(r)) return r;
  }
  return std::nullopt;
}

const char* to_string(Access a) noexcept { return a == Access::Read ? "Read" : "Write"; }

const char* to_string(Privilege p) noexcept {
  return p == Privilege::Full ? "Full" : "NonConfidentialOnly";
}

const char* to_string(DenyReason r) noexcept {
  switch (r) {
    case DenyReason::ConfidentialOverlap: return "ConfidentialOverlap";
    case DenyReason::OutOfRange: return "OutOfRange";
    case DenyReason::BadKey: return "BadKey";
    case DenyReason::RoleForbidden: return "RoleForbidden";
    case DenyReason::ZeroLength: return "ZeroLength";
    case DenyReason::ProofInvalid: return "ProofInvalid";
  }
  return "BadKey";
}

std::optional<DenyReason> deny_reason_from_string(std::string_view s) noexcept {
  for (DenyReason r : {DenyReason::ConfidentialOverlap, DenyReason::OutOfRange,
                       DenyReason::BadKey, DenyReason::RoleForbidden, DenyReason::ZeroLength,
                       DenyReason::ProofInvalid}) {
    if (s == to_string(r)) return r;
  }
  return std::nullopt;
}

std::string AccessDecision::encode() const {
  json j;
  j["verdict"] = allowed() ? "Allow" : "Deny";
  if (reason_) j["reason"] = to_string(*reason_);
  return j.dump();
}

AccessDecision AccessDecision::decode(std::string_view json_text) {
  try {
    const json j = json::parse(json_text);
    const auto verdict = j.at("verdict").get<std::string>();
    if (verdict == "Allow") return allow();
    if (verdict == "Deny") {
      auto r = deny_reason_from_string(j.at("reason").get<std::string>());
      if (!r) throw Error(Errc::ProtocolError, "unknown deny reason");
      return deny(*r);
    }
  } catch (const json::exception& e) {
    throw Error(Errc::ProtocolError, e.what());
  }
  throw Error(Errc::ProtocolError, "bad verdict");
}

bool AssetLayout::is_confidential(std::uint32_t addr) const {
  for (const auto& r : confidential_ranges) {
    if (r.contains(addr)) return true;
  }
  return false;
}

std::string AssetLayout::encode() const {
  json ranges = json::array();
  for (const auto& r : confidential_ranges) ranges.push_back({r.lo, r.hi});
  json j;
  j["asset"] = asset_id;
  j["endpoint"] = endpoint;
  j["unit"] = unit_id;
  j["register_space"] = {register_space.lo, register_space.hi};
  j["confidential"] = std::move(ranges);
  return j.dump();
}

AssetLayout AssetLayout::decode(std::string_view json_text) {
  try {
    const json j = json::parse(json_text);
    AssetLayout layout;
    layout.asset_id = j.at("asset").get<std::uint32_t>();
    layout.endpoint = j.at("endpoint").get<std::string>();
    layout.unit_id = j.at("unit").get<std::uint8_t>();
    layout.register_space = {j.at("register_space").at(0).get<std::uint32_t>(),
                             j.at("register_space").at(1).get<std::uint32_t>()};
    for (const auto& r : j.at("confidential")) {
      layout.confidential_ranges.push_back({r.at(0).get<std::uint32_t>(),
                                            r.at(1).get<std::uint32_t>()});
    }
    return layout;
  } catch (const json::exception& e) {
    throw Error(Errc::ProtocolError, e.what());
  }
}

}  // namespace ecig::secmgr
