#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace ecig {

// Error codes shared across the gateway, the secure world and the tools.
// The spelling returned by to_string() is part of the wire format (world
// channel replies, HTTP bodies, audit records); do not rename entries.
enum class Errc {
  // worldlink
  EndpointUnreachable,
  AttestationMismatch,
  NoTrainedHash,
  ContextFinalized,
  SessionClosed,
  SessionsStillOpen,
  TooManyParameters,
  HandlerError,
  FileUnreadable,
  TrainingDisabled,
  SessionNotAttested,
  ProtocolError,
  UnknownTrustedApp,
  // secmgr
  UnknownAsset,
  ZeroLength,
  StorageFull,
  // cmdparse
  EmptyInput,
  UnknownVerb,
  ArityMismatch,
  BadNumber,
  LengthMismatch,
  BadHex,
  BadKeyLength,
  // netclient / plcsim
  ConnectRefused,
  Timeout,
  CountTooLarge,
  ExceptionResponse,
  TransferError,
  NotConnected,
  BindFailure,
  OutOfRange,
  NetworkError,
  // datastore
  StorageError,
  NoStorageKey,
  DecryptFailure,
  RoleForbidden,
  // threatprofile / actmgr
  NoBaseline,
  BadInterval,
  // gateway
  BadCredentials,
  TooLarge,
  BadName,
  BadConfig,
};

const char* to_string(Errc code) noexcept;
std::optional<Errc> errc_from_string(std::string_view name) noexcept;

class Error : public std::runtime_error {
 public:
  explicit Error(Errc code, const std::string& detail = {});

  Errc code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  Errc code_;
  std::string detail_;
};

}  // namespace ecig
