#include "ecig/core/error.hpp"

#include <array>
#include <utility>

namespace ecig {
namespace {

constexpr std::array<std::pair<Errc, const char*>, 42> kNames{{
    {Errc::EndpointUnreachable, "EndpointUnreachable"},
    {Errc::AttestationMismatch, "AttestationMismatch"},
    {Errc::NoTrainedHash, "NoTrainedHash"},
    {Errc::ContextFinalized, "ContextFinalized"},
    {Errc::SessionClosed, "SessionClosed"},
    {Errc::SessionsStillOpen, "SessionsStillOpen"},
    {Errc::TooManyParameters, "TooManyParameters"},
    {Errc::HandlerError, "HandlerError"},
    {Errc::FileUnreadable, "FileUnreadable"},
    {Errc::TrainingDisabled, "TrainingDisabled"},
    {Errc::SessionNotAttested, "SessionNotAttested"},
    {Errc::ProtocolError, "ProtocolError"},
    {Errc::UnknownTrustedApp, "UnknownTrustedApp"},
    {Errc::UnknownAsset, "UnknownAsset"},
    {Errc::ZeroLength, "ZeroLength"},
    {Errc::StorageFull, "StorageFull"},
    {Errc::EmptyInput, "EmptyInput"},
    {Errc::UnknownVerb, "UnknownVerb"},
    {Errc::ArityMismatch, "ArityMismatch"},
    {Errc::BadNumber, "BadNumber"},
    {Errc::LengthMismatch, "LengthMismatch"},
    {Errc::BadHex, "BadHex"},
    {Errc::BadKeyLength, "BadKeyLength"},
    {Errc::ConnectRefused, "ConnectRefused"},
    {Errc::Timeout, "Timeout"},
    {Errc::CountTooLarge, "CountTooLarge"},
    {Errc::ExceptionResponse, "ExceptionResponse"},
    {Errc::TransferError, "TransferError"},
    {Errc::NotConnected, "NotConnected"},
    {Errc::BindFailure, "BindFailure"},
    {Errc::OutOfRange, "OutOfRange"},
    {Errc::NetworkError, "NetworkError"},
    {Errc::StorageError, "StorageError"},
    {Errc::NoStorageKey, "NoStorageKey"},
    {Errc::DecryptFailure, "DecryptFailure"},
    {Errc::RoleForbidden, "RoleForbidden"},
    {Errc::NoBaseline, "NoBaseline"},
    {Errc::BadInterval, "BadInterval"},
    {Errc::BadCredentials, "BadCredentials"},
    {Errc::TooLarge, "TooLarge"},
    {Errc::BadName, "BadName"},
    {Errc::BadConfig, "BadConfig"},
}};

std::string compose(Errc code, const std::string& detail) {
  std::string out = to_string(code);
  if (!detail.empty()) {
    out += ": ";
    out += detail;
  }
  return out;
}

}  // namespace

const char* to_string(Errc code) noexcept {
  for (const auto& [c, name] : kNames) {
    if (c == code) return name;
  }
  return "Unknown";
}

std::optional<Errc> errc_from_string(std::string_view name) noexcept {
  for (const auto& [c, n] : kNames) {
    if (name == n) return c;
  }
  return std::nullopt;
}

Error::Error(Errc code, const std::string& detail)
    : std::runtime_error(compose(code, detail)), code_(code), detail_(detail) {}

}  // namespace ecig
