#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "ecig/core/crypto.hpp"
#include "ecig/core/error.hpp"
#include "ecig/worldlink/message.hpp"

namespace ecig::worldlink {

enum class Mode { Training, Normal };

const char* to_string(Mode mode) noexcept;
Mode mode_from_string(const std::string& s);  // throws BadConfig

struct Measurement {
  std::filesystem::path image_path;
  Bytes digest;  // 20 bytes for SHA-1, 32 for SHA-256
  crypto::HashAlgorithm algorithm = crypto::HashAlgorithm::Sha1;
};

// Hashes the full file contents. Throws Error(FileUnreadable).
Measurement measure_image(const std::filesystem::path& image_path,
                          crypto::HashAlgorithm algorithm = crypto::HashAlgorithm::Sha1);

// Raised when the secure world refuses a session because the fresh
// measurement differs from the trained one. The refused session id is
// already closed on the secure side.
class AttestationFailure : public Error {
 public:
  AttestationFailure(std::uint64_t session_id, const std::string& detail)
      : Error(Errc::AttestationMismatch, detail), session_id_(session_id) {}
  std::uint64_t session_id() const noexcept { return session_id_; }

 private:
  std::uint64_t session_id_;
};

// An error raised by the trusted application itself; code() is
// HandlerError and handler_code() carries the application's code.
class HandlerFailure : public Error {
 public:
  HandlerFailure(Errc handler_code, const std::string& detail)
      : Error(Errc::HandlerError, std::string(to_string(handler_code)) +
                                      (detail.empty() ? "" : ": " + detail)),
        handler_code_(handler_code) {}
  Errc handler_code() const noexcept { return handler_code_; }

 private:
  Errc handler_code_;
};

enum class ContextState { Open, Finalized };
enum class SessionState { Open, Closed };

class WorldSession;

// Logical connection to the secure-world process. Copies share the same
// channel; the handle is safe to use from several threads.
class WorldContext {
 public:
  // Throws Error(EndpointUnreachable).
  static WorldContext initialize(const std::string& sw_endpoint);

  std::uint64_t id() const;
  ContextState state() const;
  const std::string& endpoint() const;

  // Throws AttestationFailure, Error(NoTrainedHash), Error(ContextFinalized),
  // Error(FileUnreadable).
  WorldSession open_session(const std::string& ta_id, const std::filesystem::path& image_path);

  // Stores the reference measurement for ta_id. Throws Error(TrainingDisabled).
  void train(const std::string& ta_id, const std::filesystem::path& image_path);

  // Throws Error(SessionsStillOpen).
  void finalize();

  // Invocation by raw session id; WorldSession::invoke is the normal entry.
  std::vector<Bytes> invoke(std::uint64_t session_id, WorldCommand& cmd);
  void close_session(std::uint64_t session_id);

  // Sends an arbitrary message and returns the reply. For conformance tests.
  Message exchange(const Message& request);

  struct Impl;

 private:
  friend class WorldSession;
  explicit WorldContext(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<Impl> impl_;
};

// Session with the trusted application. Invocations on one session are
// serialized; callers on other threads block.
class WorldSession {
 public:
  std::uint64_t id() const;
  const std::string& ta_id() const;
  bool attested() const;
  SessionState state() const;

  // Rewrites the Out/InOut payloads of cmd and returns them in order.
  // Throws Error(SessionClosed), Error(SessionNotAttested), HandlerFailure.
  std::vector<Bytes> invoke(WorldCommand& cmd);

  // Idempotent.
  void close();

  struct Impl;

 private:
  friend class WorldContext;
  explicit WorldSession(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<Impl> impl_;
};

}  // namespace ecig::worldlink
