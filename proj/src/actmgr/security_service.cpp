#include "ecig/actmgr/security_service.hpp"

#include <json.hpp>

#include "ecig/core/error.hpp"

namespace ecig::actmgr {

using nlohmann::json;
using worldlink::Parameter;

namespace {

json request(const FlowContext& ctx) {
  json j;
  j["principal"] = ctx.principal;
  if (ctx.flow != 0) j["flow"] = ctx.flow;
  return j;
}

Bytes dump(const json& j) { return to_bytes(j.dump()); }

std::string text(const Bytes& b) { return std::string(b.begin(), b.end()); }

}  // namespace

std::vector<Bytes> SmProxy::call(secmgr::TaCommand cmd, std::vector<Parameter> params) {
  worldlink::WorldCommand wc(static_cast<std::uint32_t>(cmd), std::move(params));
  try {
    return session_.invoke(wc);
  } catch (const worldlink::HandlerFailure& e) {
    throw Error(e.handler_code(), e.what());
  }
}

AddressGrant SmProxy::validate_address(std::uint32_t asset_id, std::uint16_t addr,
                                       std::uint32_t length, secmgr::Access access,
                                       secmgr::Privilege privilege, const FlowContext& ctx) {
  json req = request(ctx);
  req["asset"] = asset_id;
  req["addr"] = addr;
  req["length"] = length;
  req["access"] = secmgr::to_string(access);
  req["privilege"] = secmgr::to_string(privilege);
  const auto out = call(secmgr::TaCommand::ValidateAddress, {Parameter::in(dump(req)), Parameter::out()});
  AddressGrant grant;
  const std::string reply = text(out.at(0));
  grant.decision = secmgr::AccessDecision::decode(reply);
  const json j = json::parse(reply);
  if (j.contains("route")) {
    grant.route = Route{j["route"].at("endpoint").get<std::string>(),
                        j["route"].at("unit").get<std::uint8_t>()};
  }
  return grant;
}

secmgr::AccessDecision SmProxy::validate_key(ByteView key, secmgr::Role role,
                                             const FlowContext& ctx) {
  json req = request(ctx);
  req["role"] = secmgr::to_string(role);
  const auto out = call(secmgr::TaCommand::ValidateKey,
                        {Parameter::in(Bytes(key.begin(), key.end())), Parameter::in(dump(req)),
                         Parameter::out()});
  return secmgr::AccessDecision::decode(text(out.at(0)));
}

secmgr::AccessDecision SmProxy::verify_firmware_proof(std::uint32_t asset_id, ByteView digest,
                                                      ByteView proof, const FlowContext& ctx) {
  json req = request(ctx);
  req["asset"] = asset_id;
  const auto out = call(secmgr::TaCommand::VerifyFirmwareProof,
                        {Parameter::in(dump(req)), Parameter::in(Bytes(digest.begin(), digest.end())),
                         Parameter::in(Bytes(proof.begin(), proof.end())), Parameter::out()});
  return secmgr::AccessDecision::decode(text(out.at(0)));
}

secmgr::AssetLayout SmProxy::validate_asset(std::uint32_t asset_id, const FlowContext& ctx) {
  json req = request(ctx);
  req["asset"] = asset_id;
  const auto out = call(secmgr::TaCommand::ValidateAsset, {Parameter::in(dump(req)), Parameter::out()});
  return secmgr::AssetLayout::decode(text(out.at(0)));
}

Bytes SmProxy::issue_storage_key() {
  json req;
  req["principal"] = "system";
  const auto out = call(secmgr::TaCommand::IssueStorageKey, {Parameter::in(dump(req)), Parameter::out()});
  return out.at(0);
}

Bytes SmProxy::echo(ByteView data) {
  const auto out = call(secmgr::TaCommand::Echo,
                        {Parameter::in(Bytes(data.begin(), data.end())), Parameter::out()});
  return out.at(0);
}

}  // namespace ecig::actmgr
