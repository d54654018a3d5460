#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "ecig/core/audit.hpp"
#include "ecig/core/crypto.hpp"
#include "ecig/core/socket.hpp"
#include "ecig/worldlink/client.hpp"
#include "ecig/worldlink/message.hpp"

namespace ecig::worldlink {

struct SessionInfo {
  std::uint64_t session_id = 0;
  std::uint64_t context_id = 0;
  std::string ta_id;
  bool attested = false;
};

// Secure-world entry points of a trusted application.
class TrustedApplication {
 public:
  virtual ~TrustedApplication() = default;

  virtual const std::string& id() const = 0;
  virtual void create() {}
  virtual void destroy() {}
  virtual void open_session(const SessionInfo&) {}
  virtual void close_session(const SessionInfo&) {}
  // Writes results into Out/InOut slots. Throws ecig::Error, which travels
  // back to the caller as a handler error.
  virtual void invoke(const SessionInfo& session, std::uint32_t command_id,
                      std::span<Parameter> params) = 0;
};

// Reference measurements (hash_correct) persisted in secure storage, keyed
// by trusted application id.
class HashStore {
 public:
  explicit HashStore(std::filesystem::path file);

  std::optional<Measurement> get(const std::string& ta_id) const;
  void put(const std::string& ta_id, const Measurement& m);

 private:
  void save() const;

  std::filesystem::path file_;
  std::map<std::string, Measurement> entries_;
};

struct SecureWorldOptions {
  std::string endpoint;  // unix socket path
  Mode mode = Mode::Normal;
  crypto::HashAlgorithm hash = crypto::HashAlgorithm::Sha1;
  std::filesystem::path storage_dir;
};

// The secure-world side of the channel. Hosts one trusted application,
// performs the attestation check when a session opens and services one
// request at a time across all connections.
class SecureWorldServer {
 public:
  SecureWorldServer(SecureWorldOptions options, TrustedApplication& ta, audit::AuditLog& log);
  ~SecureWorldServer();
  SecureWorldServer(const SecureWorldServer&) = delete;
  SecureWorldServer& operator=(const SecureWorldServer&) = delete;

  // Binds the endpoint and starts accepting. Throws Error(BindFailure).
  void start();
  void stop();
  // Blocks until stop() is called from another thread or a signal handler.
  void wait();

  Mode mode() const { return options_.mode; }
  std::size_t create_count() const { return create_count_.load(); }

 private:
  struct ContextEntry {
    int connection = 0;
    ContextState state = ContextState::Open;
  };
  struct SessionEntry {
    SessionInfo info;
    SessionState state = SessionState::Open;
  };

  void accept_loop();
  void serve(int connection_id, int fd);
  Message handle(int connection_id, const Message& req);
  Message on_initialize(int connection_id);
  Message on_open_session(int connection_id, const Message& req);
  Message on_invoke(int connection_id, const Message& req);
  Message on_close_session(int connection_id, const Message& req);
  Message on_finalize(int connection_id, const Message& req);
  Message on_train(const Message& req);
  void drop_connection(int connection_id);
  ContextEntry& context_for(int connection_id, const Message& req);
  std::uint64_t fresh_id();
  void record(const std::string& activity, std::optional<audit::Outcome> outcome,
              const std::string& detail, const std::optional<std::string>& reason = {});

  SecureWorldOptions options_;
  TrustedApplication& ta_;
  audit::AuditLog& log_;
  HashStore hashes_;

  std::mutex mu_;  // one request at a time, across all connections
  std::map<std::uint64_t, ContextEntry> contexts_;
  std::map<std::uint64_t, SessionEntry> sessions_;
  std::atomic<std::size_t> create_count_{0};

  net::Fd listener_;
  std::thread acceptor_;
  std::mutex conn_mu_;
  std::map<int, int> connection_fds_;
  std::vector<std::thread> workers_;
  std::atomic<bool> running_{false};
  int next_connection_ = 1;
};

}  // namespace ecig::worldlink
