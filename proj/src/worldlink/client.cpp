#include "ecig/worldlink/client.hpp"

#include <fstream>
#include <iterator>
#include <mutex>

#include "ecig/core/socket.hpp"

namespace ecig::worldlink {

const char* to_string(Mode mode) noexcept {
  return mode == Mode::Training ? "training" : "normal";
}

Mode mode_from_string(const std::string& s) {
  if (s == "training") return Mode::Training;
  if (s == "normal") return Mode::Normal;
  throw Error(Errc::BadConfig, "mode must be training or normal, got '" + s + "'");
}

Measurement measure_image(const std::filesystem::path& image_path,
                          crypto::HashAlgorithm algorithm) {
  std::ifstream in(image_path, std::ios::binary);
  if (!in) throw Error(Errc::FileUnreadable, image_path.string());
  Bytes content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(Errc::FileUnreadable, image_path.string());
  return {image_path, crypto::digest(algorithm, content), algorithm};
}

struct WorldContext::Impl {
  std::string endpoint;
  net::Fd fd;
  std::uint64_t id = 0;
  mutable std::mutex mu;
  ContextState state = ContextState::Open;

  Message call(const Message& req) {
    std::lock_guard lock(mu);
    write_message(fd.get(), req);
    auto reply = read_message(fd.get());
    if (!reply) throw Error(Errc::EndpointUnreachable, "secure world closed the channel");
    return *reply;
  }
};

struct WorldSession::Impl {
  std::shared_ptr<WorldContext::Impl> ctx;
  std::uint64_t id = 0;
  std::string ta_id;
  bool attested = false;
  mutable std::mutex mu;
  SessionState state = SessionState::Open;
};

namespace {

[[noreturn]] void raise_reply_error(const Message& reply) {
  const std::string status = reply.status.value_or("ProtocolError");
  const std::string detail = reply.detail.value_or("");
  const Errc code = errc_from_string(status).value_or(Errc::ProtocolError);
  if (reply.origin && *reply.origin == "ta") throw HandlerFailure(code, detail);
  if (code == Errc::AttestationMismatch) {
    throw AttestationFailure(reply.session_id.value_or(0), detail);
  }
  throw Error(code, detail);
}

void check_ok(const Message& reply) {
  if (reply.kind != MessageKind::Reply) throw Error(Errc::ProtocolError, "expected a reply");
  if (reply.status.value_or("") != "Ok") raise_reply_error(reply);
}

}  // namespace

WorldContext WorldContext::initialize(const std::string& sw_endpoint) {
  auto impl = std::make_shared<Impl>();
  impl->endpoint = sw_endpoint;
  impl->fd = net::connect_unix(sw_endpoint);
  Message req;
  req.kind = MessageKind::InitializeContext;
  const Message reply = impl->call(req);
  check_ok(reply);
  if (!reply.context_id) throw Error(Errc::ProtocolError, "reply without context id");
  impl->id = *reply.context_id;
  return WorldContext(std::move(impl));
}

std::uint64_t WorldContext::id() const { return impl_->id; }

ContextState WorldContext::state() const {
  std::lock_guard lock(impl_->mu);
  return impl_->state;
}

const std::string& WorldContext::endpoint() const { return impl_->endpoint; }

WorldSession WorldContext::open_session(const std::string& ta_id,
                                        const std::filesystem::path& image_path) {
  if (state() == ContextState::Finalized) throw Error(Errc::ContextFinalized);
  Message req;
  req.kind = MessageKind::OpenSession;
  req.context_id = impl_->id;
  req.ta_id = ta_id;
  req.image_path = std::filesystem::absolute(image_path).string();
  const Message reply = impl_->call(req);
  check_ok(reply);
  if (!reply.session_id) throw Error(Errc::ProtocolError, "reply without session id");

  auto s = std::make_shared<WorldSession::Impl>();
  s->ctx = impl_;
  s->id = *reply.session_id;
  s->ta_id = ta_id;
  s->attested = reply.attested.value_or(false);
  return WorldSession(std::move(s));
}

void WorldContext::train(const std::string& ta_id, const std::filesystem::path& image_path) {
  Message req;
  req.kind = MessageKind::Train;
  req.context_id = impl_->id;
  req.ta_id = ta_id;
  req.image_path = std::filesystem::absolute(image_path).string();
  check_ok(impl_->call(req));
}

void WorldContext::finalize() {
  if (state() == ContextState::Finalized) return;
  Message req;
  req.kind = MessageKind::FinalizeContext;
  req.context_id = impl_->id;
  check_ok(impl_->call(req));
  std::lock_guard lock(impl_->mu);
  impl_->state = ContextState::Finalized;
}

std::vector<Bytes> WorldContext::invoke(std::uint64_t session_id, WorldCommand& cmd) {
  Message req;
  req.kind = MessageKind::InvokeCommand;
  req.context_id = impl_->id;
  req.session_id = session_id;
  req.command_id = cmd.id();
  for (const auto& p : cmd.params()) {
    // Out slots carry no data toward the secure world.
    req.params.push_back(p.direction == ParamDirection::Out ? Parameter::out() : p);
  }
  const Message reply = impl_->call(req);
  check_ok(reply);

  std::vector<Bytes> outs;
  std::size_t next = 0;
  for (std::size_t i = 0; i < cmd.params().size(); ++i) {
    if (cmd.params()[i].direction == ParamDirection::In) continue;
    if (next >= reply.params.size()) throw Error(Errc::ProtocolError, "missing out parameter");
    cmd.set_payload(i, reply.params[next].payload);
    outs.push_back(reply.params[next].payload);
    ++next;
  }
  return outs;
}

void WorldContext::close_session(std::uint64_t session_id) {
  Message req;
  req.kind = MessageKind::CloseSession;
  req.context_id = impl_->id;
  req.session_id = session_id;
  check_ok(impl_->call(req));
}

Message WorldContext::exchange(const Message& request) { return impl_->call(request); }

std::uint64_t WorldSession::id() const { return impl_->id; }

const std::string& WorldSession::ta_id() const { return impl_->ta_id; }

bool WorldSession::attested() const { return impl_->attested; }

SessionState WorldSession::state() const {
  std::lock_guard lock(impl_->mu);
  return impl_->state;
}

std::vector<Bytes> WorldSession::invoke(WorldCommand& cmd) {
  std::lock_guard lock(impl_->mu);
  if (impl_->state == SessionState::Closed) throw Error(Errc::SessionClosed);
  WorldContext ctx(impl_->ctx);
  try {
    return ctx.invoke(impl_->id, cmd);
  } catch (const Error& e) {
    if (e.code() == Errc::SessionClosed) impl_->state = SessionState::Closed;
    throw;
  }
}

void WorldSession::close() {
  std::lock_guard lock(impl_->mu);
  if (impl_->state == SessionState::Closed) return;
  impl_->state = SessionState::Closed;
  WorldContext(impl_->ctx).close_session(impl_->id);
}

}  // namespace ecig::worldlink
