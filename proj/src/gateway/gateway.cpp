#include "ecig/gateway/gateway.hpp"

#include <fcntl.h>
#include <cerrno>
#include <unistd.h>

#include <fstream>
#include <httplib.h>
#include <json.hpp>
#include <sstream>

#include "ecig/core/crypto.hpp"
#include "ecig/core/error.hpp"
#include "ecig/core/socket.hpp"

namespace ecig::gateway {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const char* kJson = "application/json";

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), kJson);
}

void reply_error(httplib::Response& res, int status, const std::string& code,
                 const std::string& detail = {}) {
  json body{{"error", code}};
  if (!detail.empty()) body["detail"] = detail;
  reply(res, status, body);
}

std::string hex_word(std::uint16_t w) {
  char buf[8];
  std::snprintf(buf, sizeof(buf), "%04X", w);
  return buf;
}

json render_payload(const actmgr::Payload& p) {
  struct Visitor {
    json operator()(std::monostate) const { return json::object(); }
    json operator()(const actmgr::RegisterWords& w) const {
      json words = json::array();
      for (auto x : w.words) words.push_back(hex_word(x));
      return {{"words", words}};
    }
    json operator()(const actmgr::WriteReceipt& w) const {
      return {{"addr", w.addr}, {"count", w.count}};
    }
    json operator()(const actmgr::InstallReceipt& r) const {
      return {{"digest", to_hex(r.image_digest)}, {"proof", to_hex(r.proof)}};
    }
    json operator()(const actmgr::RecordReceipts& r) const {
      json list = json::array();
      for (const auto& rec : r.records) {
        list.push_back({{"record_id", rec.record_id},
                        {"asset", rec.asset_id},
                        {"category", datastore::to_string(rec.category)},
                        {"captured_at", rec.captured_at_ms}});
      }
      return {{"records", list}};
    }
    json operator()(const actmgr::ProfileRef& r) const { return {{"profile_id", r.profile_id}}; }
  };
  return std::visit(Visitor{}, p);
}

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_relative() && !base.empty() ? base / path : path;
}

}  // namespace

int status_for(const actmgr::ActivityResult& result, bool parse_error) {
  if (parse_error) return 400;
  switch (result.status) {
    case actmgr::Status::Ok: return 200;
    case actmgr::Status::Denied: return 403;
    case actmgr::Status::Failed: return 502;
  }
  return 500;
}

struct RestServer::Impl {
  RestOptions options;
  actmgr::ActivityManager& am;
  datastore::DataStore& dc;
  const UserStore& users;
  const Clock& clock;
  TokenTable tokens;
  httplib::Server server;
  std::thread thread;

  Impl(RestOptions o, actmgr::ActivityManager& a, datastore::DataStore& d, const UserStore& u,
       const Clock& c)
      : options(std::move(o)),
        am(a),
        dc(d),
        users(u),
        clock(c),
        tokens(c, std::chrono::duration_cast<std::chrono::milliseconds>(options.token_ttl).count()) {}

  void audit(const std::string& principal, const std::string& activity, audit::Outcome outcome,
             const std::string& detail, std::optional<std::string> reason = {}) {
    audit::AuditRecord rec;
    rec.principal = principal;
    rec.activity = activity;
    rec.outcome = outcome;
    rec.detail = detail;
    rec.reason = std::move(reason);
    dc.append_log(std::move(rec));
  }

  std::optional<actmgr::Principal> authenticate(const httplib::Request& req, httplib::Response& res) {
    const std::string header = req.get_header_value("Authorization");
    const std::string prefix = "Bearer ";
    std::optional<actmgr::Principal> who;
    if (header.rfind(prefix, 0) == 0) who = tokens.lookup(header.substr(prefix.size()));
    if (!who) {
      audit("anonymous", "svr.authenticate", audit::Outcome::Denied, req.path, "BadToken");
      reply_error(res, 401, "BadToken");
    }
    return who;
  }

  void routes() {
    server.Get("/api/v1/health", [](const httplib::Request&, httplib::Response& res) {
      reply(res, 200, {{"status", "ok"}});
    });

    server.Post("/api/v1/auth/login", [this](const httplib::Request& req, httplib::Response& res) {
      std::string user, password;
      try {
        const json body = json::parse(req.body);
        user = body.at("user").get<std::string>();
        password = body.at("password").get<std::string>();
      } catch (const json::exception&) {
        reply_error(res, 400, "BadRequest");
        return;
      }
      auto who = users.verify(user, password);
      if (!who) {
        audit(user, "svr.login", audit::Outcome::Denied, "", "BadCredentials");
        reply_error(res, 401, "BadCredentials");
        return;
      }
      const AuthToken t = tokens.issue(*who);
      audit(who->user_id, "svr.login", audit::Outcome::Ok, std::string("role=") + secmgr::to_string(who->role));
      reply(res, 200,
            {{"token", t.token},
             {"user", who->user_id},
             {"role", secmgr::to_string(who->role)},
             {"expires_at", t.expires_at_ms}});
    });

    server.Post("/api/v1/command", [this](const httplib::Request& req, httplib::Response& res) {
      auto who = authenticate(req, res);
      if (!who) return;
      std::string line;
      try {
        line = json::parse(req.body).at("command").get<std::string>();
      } catch (const json::exception&) {
        audit(who->user_id, "svr.command", audit::Outcome::Failed, "malformed body", "BadRequest");
        reply_error(res, 400, "BadRequest");
        return;
      }
      bool parse_error = false;
      const auto result = am.submit(line, *who, &parse_error);
      json body{{"status", actmgr::to_string(result.status)}, {"flow", result.flow}};
      if (!result.reason.empty()) body["reason"] = result.reason;
      if (!result.detail.empty() && result.status != actmgr::Status::Ok) body["detail"] = result.detail;
      if (parse_error) body["error"] = result.reason;
      if (result.status == actmgr::Status::Ok) body["payload"] = render_payload(result.payload);
      reply(res, status_for(result, parse_error), body);
    });

    server.Post(R"(/api/v1/firmware/([^/]+))", [this](const httplib::Request& req,
                                                     httplib::Response& res) {
      auto who = authenticate(req, res);
      if (!who) return;
      const std::string name = req.matches[1];
      if (who->role != secmgr::Role::ThirdParty && who->role != secmgr::Role::Engineer) {
        audit(who->user_id, "svr.upload", audit::Outcome::Denied, name, "RoleForbidden");
        reply_error(res, 403, "RoleForbidden");
        return;
      }
      if (!actmgr::is_valid_staged_name(name)) {
        audit(who->user_id, "svr.upload", audit::Outcome::Failed, name, "BadName");
        reply_error(res, 400, "BadName");
        return;
      }
      if (req.body.size() > options.upload_cap) {
        audit(who->user_id, "svr.upload", audit::Outcome::Failed, name, "TooLarge");
        reply_error(res, 413, "TooLarge");
        return;
      }
      try {
        store_upload(name, req.body);
      } catch (const Error& e) {
        audit(who->user_id, "svr.upload", audit::Outcome::Failed, name, to_string(e.code()));
        reply_error(res, 500, to_string(e.code()), e.detail());
        return;
      }
      const std::string digest = to_hex(crypto::sha256(as_bytes(req.body)));
      audit(who->user_id, "svr.upload", audit::Outcome::Ok, name + " sha256=" + digest);
      reply(res, 200, {{"name", name}, {"size", req.body.size()}, {"sha256", digest}});
    });

    server.Get("/api/v1/records", [this](const httplib::Request& req, httplib::Response& res) {
      auto who = authenticate(req, res);
      if (!who) return;
      const bool full = who->role == secmgr::Role::Engineer ||
                        who->role == secmgr::Role::Administrator;
      datastore::RecordFilter filter;
      try {
        if (req.has_param("asset")) filter.asset_id = static_cast<std::uint32_t>(std::stoul(req.get_param_value("asset")));
        if (req.has_param("category")) {
          filter.category = datastore::category_from_string(req.get_param_value("category"));
          if (!filter.category) throw std::invalid_argument("category");
        }
        if (req.has_param("from")) filter.window.from_ms = std::stoll(req.get_param_value("from"));
        if (req.has_param("to")) filter.window.to_ms = std::stoll(req.get_param_value("to"));
      } catch (const std::exception&) {
        audit(who->user_id, "svr.records", audit::Outcome::Failed, req.path, "BadRequest");
        reply_error(res, 400, "BadRequest");
        return;
      }
      std::vector<datastore::StoredRecord> records;
      try {
        records = dc.get_records(filter, full ? secmgr::Privilege::Full
                                              : secmgr::Privilege::NonConfidentialOnly);
      } catch (const Error& e) {
        const bool forbidden = e.code() == Errc::RoleForbidden;
        audit(who->user_id, "svr.records", forbidden ? audit::Outcome::Denied : audit::Outcome::Failed,
              "", to_string(e.code()));
        reply_error(res, forbidden ? 403 : 500, to_string(e.code()));
        return;
      }
      json list = json::array();
      for (const auto& r : records) {
        json snap = json::array();
        for (const auto& [addr, word] : r.snapshot) snap.push_back({addr, hex_word(word)});
        list.push_back({{"record_id", r.record_id},
                        {"asset", r.asset_id},
                        {"category", datastore::to_string(r.category)},
                        {"captured_at", r.captured_at_ms},
                        {"snapshot", std::move(snap)}});
      }
      audit(who->user_id, "svr.records", audit::Outcome::Ok, "count=" + std::to_string(records.size()));
      reply(res, 200, {{"records", std::move(list)}});
    });

    server.Get(R"(/api/v1/threat-profiles/(latest|\d+))", [this](const httplib::Request& req,
                                                                 httplib::Response& res) {
      auto who = authenticate(req, res);
      if (!who) return;
      if (who->role != secmgr::Role::Administrator) {
        audit(who->user_id, "svr.profiles", audit::Outcome::Denied, req.path, "RoleForbidden");
        reply_error(res, 403, "RoleForbidden");
        return;
      }
      const std::string selector = req.matches[1];
      std::optional<std::uint64_t> id;
      if (selector == "latest") {
        id = dc.latest_profile_id();
      } else {
        try {
          id = std::stoull(selector);
        } catch (const std::exception&) {
        }
      }
      std::optional<std::string> doc;
      try {
        if (id) doc = dc.get_profile(*id);
      } catch (const Error& e) {
        audit(who->user_id, "svr.profiles", audit::Outcome::Failed, selector, to_string(e.code()));
        reply_error(res, 500, to_string(e.code()));
        return;
      }
      if (!doc) {
        audit(who->user_id, "svr.profiles", audit::Outcome::Failed, selector, "NotFound");
        reply_error(res, 404, "NotFound");
        return;
      }
      audit(who->user_id, "svr.profiles", audit::Outcome::Ok, "profile=" + std::to_string(*id));
      res.status = 200;
      res.set_header("X-Profile-Id", std::to_string(*id));
      res.set_content(*doc, kJson);
    });
  }

  void store_upload(const std::string& name, const std::string& body) {
    fs::create_directories(options.staging_dir);
    const fs::path path = options.staging_dir / name;
    const std::string tmp = path.string() + ".upload";
    const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0600);
    if (fd < 0) throw Error(Errc::StorageError, "cannot create staging file");
    std::size_t done = 0;
    bool ok = true;
    while (done < body.size()) {
      const ssize_t w = ::write(fd, body.data() + done, body.size() - done);
      if (w < 0 && errno == EINTR) continue;
      if (w <= 0) {
        ok = false;
        break;
      }
      done += static_cast<std::size_t>(w);
    }
    ::close(fd);
    if (!ok) throw Error(Errc::StorageError, "short write to staging file");
    fs::rename(tmp, path);
  }
};

RestServer::RestServer(RestOptions options, actmgr::ActivityManager& am, datastore::DataStore& dc,
                       const UserStore& users, const Clock& clock)
    : impl_(std::make_unique<Impl>(std::move(options), am, dc, users, clock)) {
  impl_->server.set_payload_max_length(impl_->options.upload_cap + 1);
  impl_->routes();
}

RestServer::~RestServer() { stop(); }

void RestServer::start() {
  auto& srv = impl_->server;
  int port = impl_->options.port;
  if (port == 0) {
    port = srv.bind_to_any_port(impl_->options.host);
    if (port < 0) throw Error(Errc::BindFailure, impl_->options.host);
  } else if (!srv.bind_to_port(impl_->options.host, port)) {
    throw Error(Errc::BindFailure, impl_->options.host + ":" + std::to_string(port));
  }
  port_ = static_cast<std::uint16_t>(port);
  impl_->thread = std::thread([&srv] { srv.listen_after_bind(); });
  srv.wait_until_ready();
}

void RestServer::stop() {
  if (!impl_ || !impl_->thread.joinable()) return;
  impl_->server.stop();
  impl_->thread.join();
}

GatewayConfig GatewayConfig::load(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(Errc::BadConfig, "cannot read " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), file.parent_path());
}

GatewayConfig GatewayConfig::parse(const std::string& text, const fs::path& base_dir) {
  GatewayConfig c;
  try {
    const json j = json::parse(text);
    c.listen = j.value("listen", c.listen);
    c.sw_endpoint = resolve(base_dir, j.at("sw_endpoint").get<std::string>()).string();
    if (j.contains("image")) c.image = resolve(base_dir, j["image"].get<std::string>());
    c.data_dir = resolve(base_dir, j.at("data_dir").get<std::string>());
    c.staging_dir = j.contains("staging_dir") ? resolve(base_dir, j["staging_dir"].get<std::string>())
                                              : c.data_dir / "staging";
    c.users_file = resolve(base_dir, j.at("users").get<std::string>());
    if (j.contains("sw_log")) c.sw_log = resolve(base_dir, j["sw_log"].get<std::string>());
    c.token_ttl = std::chrono::seconds(j.value("token_ttl_s", 3600));
    c.upload_cap = j.value("upload_cap", kDefaultUploadCap);
    c.modbus_timeout_ms = j.value("modbus_timeout_ms", netclient::kDefaultTimeoutMs);
    c.profile_window = std::chrono::seconds(j.value("profile_window_s", 86400));
    if (j.contains("scheduler")) {
      const auto& s = j["scheduler"];
      c.scheduler_enabled = s.value("enabled", true);
      auto key = from_hex(s.at("key").get<std::string>());
      if (!key || key->size() != secmgr::kKeySize) {
        throw Error(Errc::BadConfig, "scheduler key must be 64 hex digits");
      }
      c.scheduler_key = *key;
      c.scheduled_assets = s.value("assets", std::vector<std::uint32_t>{});
      c.store_interval = std::chrono::seconds(s.value("store_interval_s", 60));
      c.profile_interval = std::chrono::seconds(s.value("profile_interval_s", 300));
    }
  } catch (const json::exception& e) {
    throw Error(Errc::BadConfig, e.what());
  }
  return c;
}

Gateway::Gateway(GatewayConfig config, const Clock& clock)
    : config_(std::move(config)), clock_(clock), users_(UserStore::load(config_.users_file)) {
  if (config_.image.empty()) config_.image = fs::read_symlink("/proc/self/exe");
  ctx_ = worldlink::WorldContext::initialize(config_.sw_endpoint);
  sm_ = std::make_unique<actmgr::SmProxy>(ctx_->open_session(secmgr::kTrustedAppId, config_.image));

  datastore::DataStoreOptions dopts;
  dopts.root = config_.data_dir;
  dopts.sw_log = config_.sw_log;
  dc_ = std::make_unique<datastore::DataStore>(dopts, clock_);
  dc_->set_storage_key(sm_->issue_storage_key());

  actmgr::ActivityOptions aopts;
  aopts.staging_dir = config_.staging_dir;
  aopts.profile_window = config_.profile_window;
  aopts.modbus_timeout_ms = config_.modbus_timeout_ms;
  am_ = std::make_unique<actmgr::ActivityManager>(*sm_, *dc_, clock_, aopts);

  if (config_.scheduler_enabled) {
    actmgr::ScheduleConfig sc;
    sc.store_interval = config_.store_interval;
    sc.profile_interval = config_.profile_interval;
    sc.assets = config_.scheduled_assets;
    sc.scheduler_key = config_.scheduler_key;
    scheduler_ = std::make_unique<actmgr::Scheduler>(*am_, sc);
  }

  const auto ep = net::parse_endpoint(config_.listen);
  RestOptions ropts;
  ropts.host = ep.host;
  ropts.port = ep.port;
  ropts.staging_dir = config_.staging_dir;
  ropts.token_ttl = config_.token_ttl;
  ropts.upload_cap = config_.upload_cap;
  rest_ = std::make_unique<RestServer>(ropts, *am_, *dc_, users_, clock_);
}

Gateway::~Gateway() { stop(); }

void Gateway::start() {
  rest_->start();
  if (scheduler_) scheduler_->start();
  started_ = true;
  audit::AuditRecord rec;
  rec.principal = "system";
  rec.activity = "gateway.start";
  rec.outcome = audit::Outcome::Ok;
  rec.detail = "port=" + std::to_string(rest_->port());
  dc_->append_log(std::move(rec));
}

void Gateway::stop() {
  if (scheduler_) scheduler_->stop();
  if (rest_) rest_->stop();
  if (sm_) {
    try {
      sm_->session().close();
      ctx_->finalize();
    } catch (const Error&) {
      // the secure world may already be gone
    }
    sm_.reset();
  }
  if (started_) {
    started_ = false;
    audit::AuditRecord rec;
    rec.principal = "system";
    rec.activity = "gateway.stop";
    rec.outcome = audit::Outcome::Ok;
    dc_->append_log(std::move(rec));
  }
}

std::uint16_t Gateway::port() const { return rest_->port(); }

}  // namespace ecig::gateway
