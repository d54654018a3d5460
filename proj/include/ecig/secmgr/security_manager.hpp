#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ecig/core/audit.hpp"
#include "ecig/core/crypto.hpp"
#include "ecig/secmgr/types.hpp"
#include "ecig/worldlink/client.hpp"
#include "ecig/worldlink/secure_world.hpp"

// Secure-world only. Never linked into the gateway process.
namespace ecig::secmgr {

struct AssetPolicy {
  AssetLayout layout;
  Bytes device_key;  // 32 bytes, shared with the asset

  // Throws Error(BadConfig) when the range invariants do not hold.
  void check() const;
};

struct SecureConfig {
  std::string endpoint;
  worldlink::Mode mode = worldlink::Mode::Normal;
  crypto::HashAlgorithm hash = crypto::HashAlgorithm::Sha1;
  std::filesystem::path storage_dir;
  std::filesystem::path audit_log;
  std::uint64_t audit_max_bytes = 0;
  std::map<Role, Bytes> role_keys;
  std::vector<AssetPolicy> assets;

  // Relative paths resolve against the directory of the config file.
  static SecureConfig load(const std::filesystem::path& file);
  static SecureConfig parse(const std::string& text, const std::filesystem::path& base_dir = {});
};

// Caller identity and activity correlation forwarded for the audit trail.
struct CallerInfo {
  std::string principal = "system";
  std::optional<std::uint64_t> flow;
};

class SecurityManager {
 public:
  SecurityManager(SecureConfig config, audit::AuditLog& log);

  // Throws Error(UnknownAsset), Error(ZeroLength).
  AccessDecision validate_address(std::uint32_t asset_id, std::uint32_t addr, std::uint32_t length,
                                  Access access, Privilege privilege,
                                  const CallerInfo& caller = {});

  AccessDecision validate_key(ByteView presented, Role required, const CallerInfo& caller = {});

  // Throws Error(UnknownAsset).
  AccessDecision verify_firmware_proof(std::uint32_t asset_id, ByteView image_digest,
                                       ByteView proof, const CallerInfo& caller = {});

  // Throws Error(UnknownAsset).
  AssetLayout validate_asset(std::uint32_t asset_id, const CallerInfo& caller = {});

  // Throws Error(SessionNotAttested).
  Bytes issue_storage_key(bool attested_session, const CallerInfo& caller = {});

  // Throws Error(StorageFull).
  std::uint64_t secure_audit(audit::AuditRecord record);

  // Unaudited lookup. Throws Error(UnknownAsset).
  AssetLayout layout_of(std::uint32_t asset_id) const;

  const SecureConfig& config() const { return config_; }

 private:
  const AssetPolicy* find(std::uint32_t asset_id) const;
  void record(const CallerInfo& caller, const std::string& activity, audit::Outcome outcome,
              const std::string& detail, std::optional<std::string> reason = std::nullopt);

  SecureConfig config_;
  audit::AuditLog& log_;
};

// Adapts SecurityManager to the trusted-application entry points. Parameter
// layouts per command:
//   Echo                 [In data] [Out copy]
//   ValidateAddress      [In request json] [Out decision json, plus route on Allow]
//   ValidateKey          [In key] [In request json] [Out decision json]
//   VerifyFirmwareProof  [In request json] [In digest] [In proof] [Out decision json]
//   IssueStorageKey      [In request json] [Out key]
//   SecureAudit          [In audit line] [Out seq]
//   ValidateAsset        [In request json] [Out layout json]
class SecurityManagerTa final : public worldlink::TrustedApplication {
 public:
  explicit SecurityManagerTa(SecurityManager& sm) : sm_(sm) {}

  const std::string& id() const override { return id_; }
  void invoke(const worldlink::SessionInfo& session, std::uint32_t command_id,
              std::span<worldlink::Parameter> params) override;

 private:
  SecurityManager& sm_;
  std::string id_ = kTrustedAppId;
};

}  // namespace ecig::secmgr
