#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "ecig/core/bytes.hpp"
#include "ecig/secmgr/types.hpp"
#include "ecig/worldlink/client.hpp"

namespace ecig::actmgr {

// Who is asking, forwarded so both worlds' audit trails share a flow id.
struct FlowContext {
  std::string principal;
  std::uint64_t flow = 0;
};

struct Route {
  std::string endpoint;
  std::uint8_t unit_id = 1;
};

struct AddressGrant {
  secmgr::AccessDecision decision = secmgr::AccessDecision::deny(secmgr::DenyReason::OutOfRange);
  std::optional<Route> route;  // set on Allow
};

// The normal world's view of the security manager. Every call crosses the
// world boundary; nothing here decides policy.
class SecurityService {
 public:
  virtual ~SecurityService() = default;

  // Throws Error(UnknownAsset), Error(ZeroLength).
  virtual AddressGrant validate_address(std::uint32_t asset_id, std::uint16_t addr,
                                        std::uint32_t length, secmgr::Access access,
                                        secmgr::Privilege privilege, const FlowContext& ctx) = 0;
  virtual secmgr::AccessDecision validate_key(ByteView key, secmgr::Role role,
                                              const FlowContext& ctx) = 0;
  // Throws Error(UnknownAsset).
  virtual secmgr::AccessDecision verify_firmware_proof(std::uint32_t asset_id, ByteView digest,
                                                       ByteView proof, const FlowContext& ctx) = 0;
  // Throws Error(UnknownAsset).
  virtual secmgr::AssetLayout validate_asset(std::uint32_t asset_id, const FlowContext& ctx) = 0;
  // Throws Error(SessionNotAttested).
  virtual Bytes issue_storage_key() = 0;
};

// SecurityService over an open trusted-application session. Errors raised by
// the trusted application surface as Error with the handler's own code.
class SmProxy final : public SecurityService {
 public:
  explicit SmProxy(worldlink::WorldSession session) : session_(std::move(session)) {}

  AddressGrant validate_address(std::uint32_t asset_id, std::uint16_t addr, std::uint32_t length,
                                secmgr::Access access, secmgr::Privilege privilege,
                                const FlowContext& ctx) override;
  secmgr::AccessDecision validate_key(ByteView key, secmgr::Role role,
                                      const FlowContext& ctx) override;
  secmgr::AccessDecision verify_firmware_proof(std::uint32_t asset_id, ByteView digest,
                                               ByteView proof, const FlowContext& ctx) override;
  secmgr::AssetLayout validate_asset(std::uint32_t asset_id, const FlowContext& ctx) override;
  Bytes issue_storage_key() override;

  // Echo round trip through the trusted application.
  Bytes echo(ByteView data);

  worldlink::WorldSession& session() { return session_; }

 private:
  std::vector<Bytes> call(secmgr::TaCommand cmd, std::vector<worldlink::Parameter> params);

  worldlink::WorldSession session_;
};

}  // namespace ecig::actmgr
