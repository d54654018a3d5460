#include "ecig/worldlink/secure_world.hpp"

#include <sys/socket.h>

#include <fstream>
#include <json.hpp>

#include "ecig/core/error.hpp"

namespace ecig::worldlink {

using nlohmann::json;

namespace {

Message reply_ok() {
  Message m;
  m.kind = MessageKind::Reply;
  m.status = "Ok";
  return m;
}

Message reply_error(Errc code, const std::string& origin, const std::string& detail = {}) {
  Message m;
  m.kind = MessageKind::Reply;
  m.status = to_string(code);
  m.origin = origin;
  if (!detail.empty()) m.detail = detail;
  return m;
}

std::string id_string(std::uint64_t id) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(id));
  return buf;
}

}  // namespace

HashStore::HashStore(std::filesystem::path file) : file_(std::move(file)) {
  std::ifstream in(file_);
  if (!in) return;
  try {
    const json j = json::parse(in);
    for (const auto& [ta, entry] : j.items()) {
      Measurement m;
      m.image_path = entry.at("image").get<std::string>();
      m.algorithm = crypto::hash_algorithm_from_string(entry.at("algorithm").get<std::string>());
      auto digest = from_hex(entry.at("digest").get<std::string>());
      if (!digest) throw Error(Errc::BadConfig, "bad digest for " + ta);
      m.digest = *digest;
      entries_[ta] = std::move(m);
    }
  } catch (const json::exception& e) {
    throw Error(Errc::BadConfig, file_.string() + ": " + e.what());
  }
}

std::optional<Measurement> HashStore::get(const std::string& ta_id) const {
  auto it = entries_.find(ta_id);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void HashStore::put(const std::string& ta_id, const Measurement& m) {
  entries_[ta_id] = m;
  save();
}

void HashStore::save() const {
  json j = json::object();
  for (const auto& [ta, m] : entries_) {
    j[ta] = {{"image", m.image_path.string()},
             {"algorithm", crypto::to_string(m.algorithm)},
             {"digest", to_hex(m.digest)}};
  }
  const auto tmp = file_.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    out << j.dump(2) << "\n";
    if (!out) throw Error(Errc::StorageError, "cannot write " + tmp);
  }
  std::filesystem::rename(tmp, file_);
}

SecureWorldServer::SecureWorldServer(SecureWorldOptions options, TrustedApplication& ta,
                                     audit::AuditLog& log)
    : options_(std::move(options)),
      ta_(ta),
      log_(log),
      hashes_((std::filesystem::create_directories(options_.storage_dir),
               options_.storage_dir / "attestation.json")) {}

SecureWorldServer::~SecureWorldServer() { stop(); }

void SecureWorldServer::start() {
  listener_ = net::listen_unix(options_.endpoint);
  running_ = true;
  acceptor_ = std::thread([this] { accept_loop(); });
  record("server.start", audit::Outcome::Ok, std::string("mode=") + to_string(options_.mode));
}

void SecureWorldServer::stop() {
  if (!running_.exchange(false)) return;
  listener_.shutdown();
  if (acceptor_.joinable()) acceptor_.join();
  {
    std::lock_guard lock(conn_mu_);
    for (const auto& [id, fd] : connection_fds_) ::shutdown(fd, SHUT_RDWR);
  }
  for (auto& w : workers_) {
    if (w.joinable()) w.join();
  }
  workers_.clear();
  listener_.reset();
  std::error_code ec;
  std::filesystem::remove(options_.endpoint, ec);
  if (create_count_ > 0) ta_.destroy();
}

void SecureWorldServer::wait() {
  if (acceptor_.joinable()) acceptor_.join();
}

void SecureWorldServer::accept_loop() {
  while (running_) {
    net::Fd conn = net::accept_connection(listener_.get());
    if (!conn.valid()) break;
    std::lock_guard lock(conn_mu_);
    const int id = next_connection_++;
    connection_fds_[id] = conn.get();
    workers_.emplace_back([this, id, c = std::move(conn)]() mutable {
      serve(id, c.get());
      {
        std::lock_guard inner(conn_mu_);
        connection_fds_.erase(id);
      }
      c.reset();
    });
  }
}

void SecureWorldServer::serve(int connection_id, int fd) {
  for (;;) {
    std::optional<Message> req;
    try {
      req = read_message(fd);
    } catch (const Error& e) {
      // Unparseable frames are answered, not fatal.
      try {
        write_message(fd, reply_error(e.code(), "comms", e.detail()));
        continue;
      } catch (const Error&) {
        break;
      }
    }
    if (!req) break;
    Message reply;
    {
      std::lock_guard lock(mu_);
      reply = handle(connection_id, *req);
    }
    try {
      write_message(fd, reply);
    } catch (const Error&) {
      break;
    }
  }
  std::lock_guard lock(mu_);
  drop_connection(connection_id);
}

Message SecureWorldServer::handle(int connection_id, const Message& req) {
  try {
    switch (req.kind) {
      case MessageKind::InitializeContext: return on_initialize(connection_id);
      case MessageKind::OpenSession: return on_open_session(connection_id, req);
      case MessageKind::InvokeCommand: return on_invoke(connection_id, req);
      case MessageKind::CloseSession: return on_close_session(connection_id, req);
      case MessageKind::FinalizeContext: return on_finalize(connection_id, req);
      case MessageKind::Train: return on_train(req);
      case MessageKind::Reply: break;
    }
    return reply_error(Errc::ProtocolError, "comms", "unexpected message kind");
  } catch (const Error& e) {
    return reply_error(e.code(), "tee", e.detail());
  }
}

Message SecureWorldServer::on_initialize(int connection_id) {
  if (create_count_ == 0) {
    ta_.create();
    ++create_count_;
  }
  const std::uint64_t id = fresh_id();
  contexts_[id] = ContextEntry{connection_id, ContextState::Open};
  record("initialize_context", audit::Outcome::Ok, "context=" + id_string(id));
  Message reply = reply_ok();
  reply.context_id = id;
  return reply;
}

SecureWorldServer::ContextEntry& SecureWorldServer::context_for(int connection_id,
                                                                const Message& req) {
  if (!req.context_id) throw Error(Errc::ProtocolError, "missing context id");
  auto it = contexts_.find(*req.context_id);
  if (it == contexts_.end() || it->second.connection != connection_id) {
    throw Error(Errc::ProtocolError, "unknown context");
  }
  return it->second;
}

Message SecureWorldServer::on_open_session(int connection_id, const Message& req) {
  auto& ctx = context_for(connection_id, req);
  if (ctx.state == ContextState::Finalized) throw Error(Errc::ContextFinalized);
  if (!req.ta_id || *req.ta_id != ta_.id()) {
    throw Error(Errc::UnknownTrustedApp, req.ta_id.value_or(""));
  }
  if (!req.image_path) throw Error(Errc::ProtocolError, "missing image path");

  const auto reference = hashes_.get(*req.ta_id);
  if (!reference && options_.mode == Mode::Normal) {
    record("open_session", audit::Outcome::Denied, "ta=" + *req.ta_id, "NoTrainedHash");
    throw Error(Errc::NoTrainedHash, *req.ta_id);
  }

  SessionEntry entry;
  entry.info.session_id = fresh_id();
  entry.info.context_id = *req.context_id;
  entry.info.ta_id = *req.ta_id;

  if (reference) {
    const Measurement calculated = measure_image(*req.image_path, reference->algorithm);
    if (!crypto::constant_time_equal(calculated.digest, reference->digest)) {
      entry.state = SessionState::Closed;
      sessions_[entry.info.session_id] = entry;
      record("open_session", audit::Outcome::Denied,
             "session=" + id_string(entry.info.session_id) + " image=" + *req.image_path +
                 " hash_calculated=" + to_hex(calculated.digest),
             "AttestationMismatch");
      Message reply = reply_error(Errc::AttestationMismatch, "tee", "hash_calculated != hash_correct");
      reply.session_id = entry.info.session_id;
      return reply;
    }
    entry.info.attested = true;
  }

  ta_.open_session(entry.info);
  sessions_[entry.info.session_id] = entry;
  record("open_session", audit::Outcome::Ok,
         "session=" + id_string(entry.info.session_id) +
             (entry.info.attested ? " attested" : " unattested"));
  Message reply = reply_ok();
  reply.session_id = entry.info.session_id;
  reply.attested = entry.info.attested;
  return reply;
}

Message SecureWorldServer::on_invoke(int connection_id, const Message& req) {
  context_for(connection_id, req);
  if (!req.session_id || !req.command_id) throw Error(Errc::ProtocolError, "missing ids");
  auto it = sessions_.find(*req.session_id);
  if (it == sessions_.end() || it->second.state == SessionState::Closed ||
      it->second.info.context_id != *req.context_id) {
    throw Error(Errc::SessionClosed);
  }
  const SessionInfo& info = it->second.info;
  if (options_.mode == Mode::Normal && !info.attested) throw Error(Errc::SessionNotAttested);
  if (req.params.size() > kMaxParameters) throw Error(Errc::TooManyParameters);

  std::vector<Parameter> params = req.params;
  const std::string detail =
      "session=" + id_string(info.session_id) + " command=" + std::to_string(*req.command_id);
  try {
    ta_.invoke(info, *req.command_id, params);
  } catch (const Error& e) {
    record("invoke_command", audit::Outcome::Failed, detail, to_string(e.code()));
    return reply_error(e.code(), "ta", e.detail());
  }
  record("invoke_command", audit::Outcome::Ok, detail);

  Message reply = reply_ok();
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (req.params[i].direction == ParamDirection::In) continue;
    reply.params.push_back({req.params[i].direction, std::move(params[i].payload)});
  }
  return reply;
}

Message SecureWorldServer::on_close_session(int connection_id, const Message& req) {
  context_for(connection_id, req);
  if (!req.session_id) throw Error(Errc::ProtocolError, "missing session id");
  auto it = sessions_.find(*req.session_id);
  if (it != sessions_.end() && it->second.state == SessionState::Open) {
    it->second.state = SessionState::Closed;
    ta_.close_session(it->second.info);
    record("close_session", audit::Outcome::Ok, "session=" + id_string(*req.session_id));
  }
  return reply_ok();
}

Message SecureWorldServer::on_finalize(int connection_id, const Message& req) {
  auto& ctx = context_for(connection_id, req);
  for (const auto& [id, s] : sessions_) {
    if (s.info.context_id == *req.context_id && s.state == SessionState::Open) {
      throw Error(Errc::SessionsStillOpen);
    }
  }
  ctx.state = ContextState::Finalized;
  record("finalize_context", audit::Outcome::Ok, "context=" + id_string(*req.context_id));
  return reply_ok();
}

Message SecureWorldServer::on_train(const Message& req) {
  if (options_.mode != Mode::Training) {
    record("train", audit::Outcome::Denied, "", "TrainingDisabled");
    throw Error(Errc::TrainingDisabled);
  }
  if (!req.ta_id || *req.ta_id != ta_.id()) {
    throw Error(Errc::UnknownTrustedApp, req.ta_id.value_or(""));
  }
  if (!req.image_path) throw Error(Errc::ProtocolError, "missing image path");
  const Measurement m = measure_image(*req.image_path, options_.hash);
  hashes_.put(*req.ta_id, m);
  record("train", audit::Outcome::Ok, "ta=" + *req.ta_id + " hash_correct=" + to_hex(m.digest));
  return reply_ok();
}

void SecureWorldServer::drop_connection(int connection_id) {
  for (auto it = contexts_.begin(); it != contexts_.end();) {
    if (it->second.connection != connection_id) {
      ++it;
      continue;
    }
    for (auto& [sid, s] : sessions_) {
      if (s.info.context_id == it->first && s.state == SessionState::Open) {
        s.state = SessionState::Closed;
        ta_.close_session(s.info);
      }
    }
    it = contexts_.erase(it);
  }
}

std::uint64_t SecureWorldServer::fresh_id() {
  for (;;) {
    const Bytes raw = crypto::random_bytes(8);
    std::uint64_t id = 0;
    for (auto b : raw) id = (id << 8) | b;
    if (id != 0 && !contexts_.count(id) && !sessions_.count(id)) return id;
  }
}

void SecureWorldServer::record(const std::string& activity,
                               std::optional<audit::Outcome> outcome, const std::string& detail,
                               const std::optional<std::string>& reason) {
  audit::AuditRecord rec;
  rec.principal = "system";
  rec.activity = activity;
  rec.outcome = outcome;
  rec.detail = detail;
  rec.reason = reason;
  log_.append(std::move(rec));
}

}  // namespace ecig::worldlink
