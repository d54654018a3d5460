#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ecig/core/bytes.hpp"

// Vocabulary shared by both worlds: the security manager's decisions and
// the command set its trusted application answers. Nothing in here holds a
// secret or makes a policy decision.
namespace ecig::secmgr {

enum class Role { ThirdParty, Engineer, Administrator, Scheduler };

const char* to_string(Role role) noexcept;
std::optional<Role> role_from_string(std::string_view s) noexcept;
constexpr Role kAllRoles[] = {Role::ThirdParty, Role::Engineer, Role::Administrator,
                              Role::Scheduler};

enum class Access { Read, Write };
enum class Privilege { NonConfidentialOnly, Full };

const char* to_string(Access a) noexcept;
const char* to_string(Privilege p) noexcept;

// Inclusive register address range.
struct AddressRange {
  std::uint32_t lo = 0;
  std::uint32_t hi = 0;

  bool contains(std::uint32_t addr) const { return addr >= lo && addr <= hi; }
  bool intersects(std::uint32_t a, std::uint32_t b) const { return a <= hi && lo <= b; }
  bool operator==(const AddressRange&) const = default;
};

enum class Verdict { Allow, Deny };

enum class DenyReason {
  ConfidentialOverlap,
  OutOfRange,
  BadKey,
  RoleForbidden,
  ZeroLength,
  ProofInvalid,
};

const char* to_string(DenyReason r) noexcept;
std::optional<DenyReason> deny_reason_from_string(std::string_view s) noexcept;

// Deny always carries exactly one reason; Allow carries none.
class AccessDecision {
 public:
  static AccessDecision allow() { return AccessDecision(Verdict::Allow, std::nullopt); }
  static AccessDecision deny(DenyReason r) { return AccessDecision(Verdict::Deny, r); }

  Verdict verdict() const noexcept { return verdict_; }
  bool allowed() const noexcept { return verdict_ == Verdict::Allow; }
  std::optional<DenyReason> reason() const noexcept { return reason_; }

  std::string encode() const;
  static AccessDecision decode(std::string_view json_text);  // throws ProtocolError

  bool operator==(const AccessDecision&) const = default;

 private:
  AccessDecision(Verdict v, std::optional<DenyReason> r) : verdict_(v), reason_(r) {}
  Verdict verdict_;
  std::optional<DenyReason> reason_;
};

// Public part of an asset policy, as handed to the normal world after the
// asset id has been validated. The device key never leaves the secure world.
struct AssetLayout {
  std::uint32_t asset_id = 0;
  std::string endpoint;
  std::uint8_t unit_id = 1;
  AddressRange register_space;
  std::vector<AddressRange> confidential_ranges;

  bool is_confidential(std::uint32_t addr) const;

  std::string encode() const;
  static AssetLayout decode(std::string_view json_text);
};

// Trusted application command ids.
enum class TaCommand : std::uint32_t {
  Echo = 0,
  ValidateAddress = 1,
  ValidateKey = 2,
  VerifyFirmwareProof = 3,
  IssueStorageKey = 4,
  SecureAudit = 5,
  ValidateAsset = 6,
};

inline constexpr const char* kTrustedAppId = "ecig.security-manager";
inline constexpr std::size_t kKeySize = 32;

}  // namespace ecig::secmgr
