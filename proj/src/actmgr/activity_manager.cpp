#include "ecig/actmgr/activity_manager.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>

#include "ecig/core/crypto.hpp"
#include "ecig/core/error.hpp"
#include "ecig/threatprofile/profile.hpp"

namespace ecig::actmgr {

using cmdparse::CommandKind;
using cmdparse::ValidatedCommand;
using secmgr::Role;

namespace {

// A step failed; the flow ends Failed (or Denied) with this reason.
struct StepFailure {
  Status status;
  std::string reason;
  std::string detail;
};

audit::Outcome outcome_of(Status s) {
  switch (s) {
    case Status::Ok: return audit::Outcome::Ok;
    case Status::Denied: return audit::Outcome::Denied;
    case Status::Failed: return audit::Outcome::Failed;
  }
  return audit::Outcome::Failed;
}

std::string reason_for(Errc code) {
  switch (code) {
    case Errc::ConnectRefused:
    case Errc::Timeout:
    case Errc::NotConnected:
    case Errc::NetworkError:
      return "NetworkError";
    default:
      return to_string(code);
  }
}

std::string describe(const ValidatedCommand& cmd) {
  std::string d;
  auto add = [&d](const std::string& k, const std::string& v) {
    if (!d.empty()) d += ' ';
    d += k + "=" + v;
  };
  if (cmd.asset_id) add("asset", std::to_string(*cmd.asset_id));
  if (cmd.addr) add("addr", std::to_string(*cmd.addr));
  if (cmd.length) add("length", std::to_string(*cmd.length));
  if (cmd.filename) add("file", *cmd.filename);
  return d;
}

std::uint64_t fresh_flow_id() {
  const Bytes b = crypto::random_bytes(8);
  std::uint64_t v = 0;
  for (auto x : b) v = (v << 8) | x;
  v &= (std::uint64_t{1} << 53) - 1;  // stays exact in JSON consumers using doubles
  return v == 0 ? 1 : v;
}

}  // namespace

const char* to_string(Status s) noexcept {
  switch (s) {
    case Status::Ok: return "Ok";
    case Status::Denied: return "Denied";
    case Status::Failed: return "Failed";
  }
  return "Failed";
}

bool role_permits(CommandKind kind, Role role) noexcept {
  switch (kind) {
    case CommandKind::Read:
    case CommandKind::Write:
    case CommandKind::Update:
      return role == Role::ThirdParty;
    case CommandKind::ReadS:
    case CommandKind::WriteS:
    case CommandKind::StoreS:
      return role == Role::Engineer || role == Role::Scheduler;
    case CommandKind::GenThreatProfileS:
      return role == Role::Administrator || role == Role::Scheduler;
  }
  return false;
}

bool is_valid_staged_name(std::string_view name) noexcept {
  if (name.empty() || name.size() > 255 || name == "." || name == "..") return false;
  return std::none_of(name.begin(), name.end(),
                      [](char c) { return c == '/' || c == '\\' || c == '\0'; });
}

class ActivityManager::Flow {
 public:
  Flow(datastore::DataStore& dc, const Clock& clock, const Principal& who)
      : dc_(dc), clock_(clock), who_(who), id_(fresh_flow_id()), started_(clock.now_ms()) {}

  const Principal& who() const { return who_; }
  FlowContext ctx() const { return {who_.user_id, id_}; }
  void set_kind(CommandKind k) { kind_ = k; }

  void step(const char* activity, audit::Outcome outcome, std::string detail = {},
            std::optional<std::string> reason = {}) {
    audit::AuditRecord rec;
    rec.principal = who_.user_id;
    rec.activity = activity;
    rec.outcome = outcome;
    rec.detail = std::move(detail);
    rec.flow = id_;
    rec.reason = std::move(reason);
    ids_.push_back(dc_.append_log(std::move(rec)));
  }

  // Runs one step; an Error becomes a Failed step record and a StepFailure.
  template <class F>
  auto attempt(const char* activity, F&& f, std::string detail = {}) {
    try {
      if constexpr (std::is_void_v<decltype(f())>) {
        f();
        step(activity, audit::Outcome::Ok, detail);
      } else {
        auto r = f();
        step(activity, audit::Outcome::Ok, detail);
        return r;
      }
    } catch (const Error& e) {
      const std::string reason = reason_for(e.code());
      step(activity, audit::Outcome::Failed, e.what(), reason);
      throw StepFailure{Status::Failed, reason, e.what()};
    }
  }

  // Security-manager verdict step: Deny ends the flow.
  void require(const secmgr::AccessDecision& d, const char* activity, std::string detail,
               Status deny_status = Status::Denied) {
    if (d.allowed()) {
      step(activity, audit::Outcome::Ok, std::move(detail));
      return;
    }
    const std::string reason = secmgr::to_string(*d.reason());
    step(activity, audit::Outcome::Denied, detail, reason);
    throw StepFailure{deny_status, reason, detail};
  }

  // Security-manager call whose errors (unknown asset, zero length) deny.
  template <class F>
  auto ask(const char* activity, F&& f) {
    try {
      return f();
    } catch (const Error& e) {
      step(activity, audit::Outcome::Denied, e.what(), to_string(e.code()));
      throw StepFailure{Status::Denied, to_string(e.code()), e.what()};
    }
  }

  ActivityResult finish(Status status, std::string reason, Payload payload, std::string detail) {
    ActivityResult r;
    r.status = status;
    r.reason = std::move(reason);
    r.detail = detail;
    r.payload = std::move(payload);
    r.flow = id_;
    if (kind_) {
      audit::AuditRecord rec;
      rec.principal = who_.user_id;
      rec.activity = cmdparse::to_string(*kind_);
      rec.outcome = outcome_of(status);
      rec.latency_ms = std::max<std::int64_t>(0, clock_.now_ms() - started_);
      rec.detail = std::move(detail);
      rec.flow = id_;
      if (!r.reason.empty()) rec.reason = r.reason;
      ids_.push_back(dc_.append_log(std::move(rec)));
    }
    r.audit_ids = ids_;
    return r;
  }

 private:
  datastore::DataStore& dc_;
  const Clock& clock_;
  Principal who_;
  std::uint64_t id_;
  std::int64_t started_;
  std::optional<CommandKind> kind_;
  std::vector<std::uint64_t> ids_;
};

ActivityManager::ActivityManager(SecurityService& sm, datastore::DataStore& dc, const Clock& clock,
                                 ActivityOptions options)
    : sm_(sm), dc_(dc), clock_(clock), options_(std::move(options)) {}

void ActivityManager::set_connection_hook(ConnectionHook hook) {
  std::lock_guard lock(hook_mu_);
  hook_ = std::move(hook);
}

ActivityResult ActivityManager::submit(std::string_view line, const Principal& who,
                                       bool* parse_error) {
  Flow flow(dc_, clock_, who);
  if (parse_error) *parse_error = false;
  ValidatedCommand cmd;
  try {
    cmd = cmdparse::parse(line);
  } catch (const Error& e) {
    flow.step("cp.parse", audit::Outcome::Failed, e.what(), to_string(e.code()));
    if (parse_error) *parse_error = true;
    return flow.finish(Status::Failed, to_string(e.code()), {}, e.what());
  }
  flow.step("cp.parse", audit::Outcome::Ok, cmdparse::to_string(cmd.kind));
  return run(cmd, flow);
}

ActivityResult ActivityManager::dispatch(const ValidatedCommand& cmd, const Principal& who) {
  Flow flow(dc_, clock_, who);
  return run(cmd, flow);
}

ActivityResult ActivityManager::run(const ValidatedCommand& cmd, Flow& flow) {
  flow.set_kind(cmd.kind);
  const std::string role = secmgr::to_string(flow.who().role);
  if (!role_permits(cmd.kind, flow.who().role)) {
    flow.step("am.role_gate", audit::Outcome::Denied, "role=" + role, "RoleForbidden");
    return flow.finish(Status::Denied, "RoleForbidden", {}, describe(cmd));
  }
  flow.step("am.role_gate", audit::Outcome::Ok, "role=" + role);
  try {
    switch (cmd.kind) {
      case CommandKind::Read:
      case CommandKind::Write:
        return run_diagnostic(cmd, flow);
      case CommandKind::Update:
        return run_firmware_update(cmd, flow);
      case CommandKind::ReadS:
      case CommandKind::WriteS:
        return run_maintenance(cmd, flow);
      case CommandKind::StoreS:
        return run_store(cmd, flow);
      case CommandKind::GenThreatProfileS:
        return run_threat_profile(cmd, flow);
    }
  } catch (const StepFailure& f) {
    return flow.finish(f.status, f.reason, {}, f.detail);
  } catch (const Error& e) {
    return flow.finish(Status::Failed, reason_for(e.code()), {}, e.what());
  }
  return flow.finish(Status::Failed, "ProtocolError", {}, "unhandled command kind");
}

ActivityResult ActivityManager::run_diagnostic(const ValidatedCommand& cmd, Flow& flow) {
  const auto access = cmd.kind == CommandKind::Write ? secmgr::Access::Write : secmgr::Access::Read;
  const AddressGrant grant = flow.ask("sm.validate_address", [&] {
    return sm_.validate_address(*cmd.asset_id, *cmd.addr, *cmd.length, access,
                                secmgr::Privilege::NonConfidentialOnly, flow.ctx());
  });
  flow.require(grant.decision, "sm.validate_address", describe(cmd));
  return register_io(cmd, *grant.route, flow);
}

ActivityResult ActivityManager::run_maintenance(const ValidatedCommand& cmd, Flow& flow) {
  const Role role = flow.who().role;
  flow.require(sm_.validate_key(*cmd.key, role, flow.ctx()), "sm.validate_key",
                std::string("role=") + secmgr::to_string(role));
  const auto access = cmd.kind == CommandKind::WriteS ? secmgr::Access::Write : secmgr::Access::Read;
  const AddressGrant grant = flow.ask("sm.validate_address", [&] {
    return sm_.validate_address(*cmd.asset_id, *cmd.addr, *cmd.length, access,
                                secmgr::Privilege::Full, flow.ctx());
  });
  flow.require(grant.decision, "sm.validate_address", describe(cmd));
  return register_io(cmd, *grant.route, flow);
}

std::unique_ptr<netclient::AssetConnection> ActivityManager::connect(std::uint32_t asset_id,
                                                                     const Route& route, Flow& flow) {
  auto conn = flow.attempt(
      "nc.connect",
      [&] {
        return std::make_unique<netclient::AssetConnection>(asset_id, route.endpoint, route.unit_id,
                                                             options_.modbus_timeout_ms);
      },
      "endpoint=" + route.endpoint);
  std::lock_guard lock(hook_mu_);
  if (hook_) hook_(*conn);
  return conn;
}

std::vector<std::uint16_t> ActivityManager::read_span(netclient::AssetConnection& conn,
                                                      std::uint32_t addr, std::uint32_t count) {
  std::vector<std::uint16_t> words;
  words.reserve(count);
  while (count > 0) {
    const auto n = static_cast<std::uint16_t>(std::min<std::uint32_t>(count, 125));
    auto part = conn.read_registers(static_cast<std::uint16_t>(addr), n);
    words.insert(words.end(), part.begin(), part.end());
    addr += n;
    count -= n;
  }
  return words;
}

ActivityResult ActivityManager::register_io(const ValidatedCommand& cmd, const Route& route,
                                            Flow& flow) {
  auto conn = connect(*cmd.asset_id, route, flow);
  const bool is_read = cmd.kind == CommandKind::Read || cmd.kind == CommandKind::ReadS;
  Payload payload;
  if (is_read) {
    auto words = flow.attempt("nc.read", [&] { return read_span(*conn, *cmd.addr, *cmd.length); },
                              describe(cmd));
    payload = RegisterWords{std::move(words)};
  } else {
    flow.attempt(
        "nc.write",
        [&] {
          const auto& data = *cmd.data;
          for (std::size_t off = 0; off < data.size(); off += 123) {
            const auto end = std::min(data.size(), off + 123);
            conn->write_registers(static_cast<std::uint16_t>(*cmd.addr + off),
                                  std::vector<std::uint16_t>(data.begin() + off, data.begin() + end));
          }
        },
        describe(cmd));
    payload = WriteReceipt{*cmd.addr, *cmd.length};
  }
  flow.attempt("nc.disconnect", [&] { conn->disconnect(); });
  return flow.finish(Status::Ok, "", std::move(payload), describe(cmd));
}

ActivityResult ActivityManager::run_firmware_update(const ValidatedCommand& cmd, Flow& flow) {
  const secmgr::AssetLayout layout =
      flow.ask("sm.validate_asset", [&] { return sm_.validate_asset(*cmd.asset_id, flow.ctx()); });
  flow.step("sm.validate_asset", audit::Outcome::Ok, describe(cmd));

  const Bytes image = flow.attempt(
      "fw.load_image",
      [&] {
        if (!is_valid_staged_name(*cmd.filename)) throw Error(Errc::BadName, *cmd.filename);
        std::ifstream in(options_.staging_dir / *cmd.filename, std::ios::binary);
        if (!in) throw Error(Errc::FileUnreadable, *cmd.filename);
        Bytes data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        if (data.empty()) throw Error(Errc::FileUnreadable, "empty image " + *cmd.filename);
        return data;
      },
      "file=" + *cmd.filename);
  const Bytes digest = crypto::sha256(image);

  auto conn = connect(*cmd.asset_id, Route{layout.endpoint, layout.unit_id}, flow);
  const Bytes proof = flow.attempt("nc.transfer_firmware", [&] { return conn->transfer_firmware(image); },
                                   "bytes=" + std::to_string(image.size()));
  flow.attempt("nc.disconnect", [&] { conn->disconnect(); });

  // A proof the security manager rejects means the install failed.
  flow.require(sm_.verify_firmware_proof(*cmd.asset_id, digest, proof, flow.ctx()),
               "sm.verify_firmware_proof", "digest=" + to_hex(digest), Status::Failed);
  return flow.finish(Status::Ok, "", InstallReceipt{digest, proof}, describe(cmd));
}

ActivityResult ActivityManager::run_store(const ValidatedCommand& cmd, Flow& flow) {
  const Role role = flow.who().role;
  flow.require(sm_.validate_key(*cmd.key, role, flow.ctx()), "sm.validate_key",
                std::string("role=") + secmgr::to_string(role));
  const secmgr::AssetLayout layout =
      flow.ask("sm.validate_asset", [&] { return sm_.validate_asset(*cmd.asset_id, flow.ctx()); });
  flow.step("sm.validate_asset", audit::Outcome::Ok, describe(cmd));

  const auto lo = layout.register_space.lo;
  const auto count = layout.register_space.hi - lo + 1;
  auto conn = connect(*cmd.asset_id, Route{layout.endpoint, layout.unit_id}, flow);
  const auto words = flow.attempt("nc.read", [&] { return read_span(*conn, lo, count); },
                                  "snapshot words=" + std::to_string(count));
  flow.attempt("nc.disconnect", [&] { conn->disconnect(); });

  const std::int64_t captured = clock_.now_ms();
  datastore::StoredRecord conf{0, *cmd.asset_id, datastore::Category::Confidential, captured, {}};
  datastore::StoredRecord open{0, *cmd.asset_id, datastore::Category::NonConfidential, captured, {}};
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto addr = static_cast<std::uint16_t>(lo + i);
    (layout.is_confidential(addr) ? conf : open).snapshot[addr] = words[i];
  }

  RecordReceipts receipts;
  for (auto* rec : {&conf, &open}) {
    if (rec->snapshot.empty()) continue;
    try {
      receipts.records.push_back(flow.attempt(
          "dc.put_record", [&] { return dc_.put_record(*rec); },
          std::string("category=") + datastore::to_string(rec->category)));
    } catch (const StepFailure&) {
      for (const auto& r : receipts.records) dc_.remove_record(r);  // all or nothing
      throw;
    }
  }
  return flow.finish(Status::Ok, "", std::move(receipts), describe(cmd));
}

ActivityResult ActivityManager::run_threat_profile(const ValidatedCommand& cmd, Flow& flow) {
  const Role role = flow.who().role;
  flow.require(sm_.validate_key(*cmd.key, role, flow.ctx()), "sm.validate_key",
                std::string("role=") + secmgr::to_string(role));

  const std::int64_t now = clock_.now_ms();
  const audit::TimeWindow window{now - options_.profile_window.count(), now};
  auto logs = flow.attempt(
      "dc.read_logs", [&] { return dc_.read_logs(window, audit::World::NW); },
      "from=" + std::to_string(window.from_ms) + " to=" + std::to_string(window.to_ms));
  // The request describing itself would skew every profile it produces.
  const std::uint64_t self = flow.ctx().flow;
  logs.erase(std::remove_if(logs.begin(), logs.end(),
                            [self](const audit::AuditRecord& r) { return r.flow == self; }),
             logs.end());

  std::string document;
  flow.attempt("tpw.build_profile", [&] {
    const auto tree = threatprofile::build_profile(logs, window);
    std::vector<threatprofile::ThreatProfileTree> baseline;
    if (auto latest = dc_.latest_profile_id()) {
      for (std::uint64_t id = *latest; id >= 1 && baseline.size() < options_.baseline_profiles; --id) {
        try {
          if (auto doc = dc_.get_profile(id)) baseline.push_back(threatprofile::parse_profile(*doc));
        } catch (const Error&) {
          // an unreadable profile is not a baseline
        }
      }
    }
    std::vector<threatprofile::Anomaly> anomalies;
    if (!baseline.empty()) anomalies = threatprofile::detect_anomalies(tree, baseline, options_.anomaly_k);
    document = threatprofile::serialize(tree, &anomalies);
  });
  const auto id = flow.attempt("dc.put_profile", [&] { return dc_.put_profile(document); });
  return flow.finish(Status::Ok, "", ProfileRef{id}, "profile=" + std::to_string(id));
}

Scheduler::Scheduler(ActivityManager& am, ScheduleConfig config) : am_(am), config_(std::move(config)) {
  using std::chrono::seconds;
  if (config_.store_interval < seconds(1) || (config_.profiles && config_.profile_interval < seconds(1))) {
    throw Error(Errc::BadInterval, "intervals must be at least one second");
  }
}

Scheduler::~Scheduler() { stop(); }

void Scheduler::start() {
  std::lock_guard lock(mu_);
  if (thread_.joinable()) return;
  stopping_ = false;
  thread_ = std::thread([this] { loop(); });
}

void Scheduler::stop() {
  {
    std::lock_guard lock(mu_);
    stopping_ = true;
  }
  cv_.notify_all();
  if (thread_.joinable()) thread_.join();
}

void Scheduler::loop() {
  using SteadyClock = std::chrono::steady_clock;
  const Principal who{"scheduler", Role::Scheduler};
  auto next_store = SteadyClock::now();
  auto next_profile = SteadyClock::now();
  for (;;) {
    {
      std::unique_lock lock(mu_);
      const auto due = config_.profiles ? std::min(next_store, next_profile) : next_store;
      cv_.wait_until(lock, due, [this] { return stopping_; });
      if (stopping_) return;
    }
    const auto now = SteadyClock::now();
    if (now >= next_store) {
      for (auto asset : config_.assets) {
        ValidatedCommand cmd;
        cmd.kind = CommandKind::StoreS;
        cmd.key = config_.scheduler_key;
        cmd.asset_id = asset;
        am_.dispatch(cmd, who);
      }
      ++store_ticks_;
      next_store += config_.store_interval;
    }
    if (config_.profiles && now >= next_profile) {
      ValidatedCommand cmd;
      cmd.kind = CommandKind::GenThreatProfileS;
      cmd.key = config_.scheduler_key;
      am_.dispatch(cmd, who);
      ++profile_ticks_;
      next_profile += config_.profile_interval;
    }
  }
}

}  // namespace ecig::actmgr
