#include <catch2/catch_amalgamated.hpp>

#include <httplib.h>

#include <json.hpp>

#include "ecig/core/crypto.hpp"
#include "ecig/gateway/gateway.hpp"
#include "support/fixtures.hpp"
#include "support/ref_hash.hpp"

using namespace ecig;
using nlohmann::json;
using secmgr::Role;

namespace {

std::vector<testbed::AssetSpec> fleet() {
  testbed::AssetSpec a;
  a.id = 1;
  a.preload[0x0010] = {0x00AA, 0x00BB};
  return {a};
}

struct Running {
  explicit Running(testbed::TestBed& bed, gateway::GatewayConfig cfg, const Clock& clock = system_clock())
      : gw(std::move(cfg), clock), http(started(gw)) {
    http.set_read_timeout(30, 0);
    (void)bed;
  }

  static httplib::Client started(gateway::Gateway& g) {
    g.start();
    return httplib::Client("127.0.0.1", g.port());
  }

  std::string login(const std::string& user, const std::string& pw) {
    auto r = http.Post("/api/v1/auth/login", json{{"user", user}, {"password", pw}}.dump(),
                       "application/json");
    REQUIRE(r);
    REQUIRE(r->status == 200);
    return json::parse(r->body).at("token").get<std::string>();
  }

  httplib::Headers auth(const std::string& token) { return {{"Authorization", "Bearer " + token}}; }

  httplib::Result command(const std::string& token, const std::string& line) {
    return http.Post("/api/v1/command", auth(token), json{{"command", line}}.dump(), "application/json");
  }

  std::size_t nw_log_count(const std::string& activity) {
    std::size_t n = 0;
    for (const auto& r : gw.store().read_logs({}, audit::World::NW)) n += r.activity == activity;
    return n;
  }

  gateway::Gateway gw;
  httplib::Client http;
};

}  // namespace

TEST_CASE("status mapping") {
  actmgr::ActivityResult r;
  r.status = actmgr::Status::Ok;
  CHECK(gateway::status_for(r, false) == 200);
  CHECK(gateway::status_for(r, true) == 400);
  r.status = actmgr::Status::Denied;
  CHECK(gateway::status_for(r, false) == 403);
  r.status = actmgr::Status::Failed;
  CHECK(gateway::status_for(r, false) == 502);
}

TEST_CASE("users file") {
  const auto entry = gateway::UserStore::make_entry("ops", Role::Engineer, "s3cret", 1000);
  CHECK(entry.salt.size() == 16);
  CHECK(entry.hash.size() == 32);
  const auto store = gateway::UserStore::parse(gateway::UserStore::dump({entry}));
  const auto who = store.verify("ops", "s3cret");
  REQUIRE(who);
  CHECK(who->role == Role::Engineer);
  CHECK_FALSE(store.verify("ops", "S3cret"));
  CHECK_FALSE(store.verify("nobody", "s3cret"));
  CHECK_THROWS_AS(gateway::UserStore::parse("{\"users\":[{\"id\":\"x\"}]}"), Error);
}

TEST_CASE("tokens expire") {
  ManualClock clock;
  gateway::TokenTable table(clock, 1000);
  const auto t = table.issue({"tp", Role::ThirdParty});
  CHECK(t.token.size() == 64);
  CHECK(table.lookup(t.token));
  clock.advance(999);
  CHECK(table.lookup(t.token));
  clock.advance(2);
  CHECK_FALSE(table.lookup(t.token));
  CHECK(table.issue({"tp", Role::ThirdParty}).token != t.token);
}

TEST_CASE("login and bearer tokens") {
  testbed::TestBed bed(fleet());
  ManualClock clock;
  auto cfg = bed.gateway_config();
  cfg.token_ttl = std::chrono::seconds(60);
  Running g(bed, cfg, clock);

  const std::string token = g.login("tp", "tp-pw");
  CHECK(token.size() == 64);

  auto wrong_pw = g.http.Post("/api/v1/auth/login", json{{"user", "tp"}, {"password", "nope"}}.dump(), "application/json");
  auto no_user = g.http.Post("/api/v1/auth/login", json{{"user", "ghost"}, {"password", "nope"}}.dump(), "application/json");
  REQUIRE(wrong_pw);
  REQUIRE(no_user);
  CHECK(wrong_pw->status == 401);
  CHECK(no_user->status == 401);
  CHECK(wrong_pw->body == no_user->body);

  auto garbage = g.http.Post("/api/v1/auth/login", "{", "application/json");
  CHECK(garbage->status == 400);

  auto none = g.http.Post("/api/v1/command", json{{"command", "read 1 0x10 1"}}.dump(), "application/json");
  CHECK(none->status == 401);
  CHECK(json::parse(none->body).at("error") == "BadToken");
  CHECK(g.command(std::string(64, 'f'), "read 1 0x10 1")->status == 401);

  CHECK(g.command(token, "read 1 0x10 1")->status == 200);
  clock.advance(61'000);
  CHECK(g.command(token, "read 1 0x10 1")->status == 401);
  CHECK(g.nw_log_count("svr.login") == 3);
}

TEST_CASE("command endpoint") {
  testbed::TestBed bed(fleet());
  Running g(bed, bed.gateway_config());
  const std::string tp = g.login("tp", "tp-pw");
  const std::string eng = g.login("eng", "eng-pw");

  auto ok = g.command(tp, "read 1 0x0010 2");
  REQUIRE(ok->status == 200);
  auto body = json::parse(ok->body);
  CHECK(body.at("status") == "Ok");
  CHECK(body.at("payload").at("words") == json::array({"00AA", "00BB"}));
  const auto flow = body.at("flow").get<std::uint64_t>();
  CHECK(testbed::sw_flow_steps(bed, flow) == std::vector<std::string>{"validate_address"});

  auto denied = g.command(tp, "read 1 0x0100 1");
  CHECK(denied->status == 403);
  CHECK(json::parse(denied->body).at("reason") == "ConfidentialOverlap");

  auto role = g.command(tp, "read_s " + testbed::role_key_hex(Role::Engineer) + " 1 0x0100 1");
  CHECK(role->status == 403);
  CHECK(json::parse(role->body).at("reason") == "RoleForbidden");

  auto parse = g.command(tp, "read 1 0x10");
  CHECK(parse->status == 400);
  CHECK(json::parse(parse->body).at("error") == "ArityMismatch");

  auto full = g.command(eng, "read_s " + testbed::role_key_hex(Role::Engineer) + " 1 0x0100 1");
  CHECK(full->status == 200);

  bed.asset(1).stop();
  auto down = g.command(tp, "read 1 0x0010 1");
  CHECK(down->status == 502);
  CHECK(json::parse(down->body).at("reason") == "NetworkError");

  auto malformed = g.http.Post("/api/v1/command", g.auth(tp), "[]", "application/json");
  CHECK(malformed->status == 400);
}

TEST_CASE("firmware upload and install") {
  testbed::TestBed bed(fleet());
  auto cfg = bed.gateway_config();
  cfg.upload_cap = 8192;
  Running g(bed, cfg);
  const std::string tp = g.login("tp", "tp-pw");
  const std::string admin = g.login("admin", "admin-pw");

  const Bytes image = crypto::random_bytes(3000);
  const std::string blob(image.begin(), image.end());
  auto up = g.http.Post("/api/v1/firmware/fw.bin", g.auth(tp), blob, "application/octet-stream");
  REQUIRE(up->status == 200);
  CHECK(json::parse(up->body).at("sha256") == to_hex(ref::sha256(image)));
  CHECK(testbed::read_file(cfg.staging_dir / "fw.bin") == image);

  auto install = g.command(tp, "update 1 fw.bin");
  REQUIRE(install->status == 200);
  const auto payload = json::parse(install->body).at("payload");
  CHECK(payload.at("digest") == to_hex(ref::sha256(image)));
  CHECK(payload.at("proof") == to_hex(ref::hmac_sha256(testbed::device_key(1), ref::sha256(image))));
  CHECK(bed.asset(1).active_digest() == ref::sha256(image));

  CHECK(g.http.Post("/api/v1/firmware/..", g.auth(tp), blob, "application/octet-stream")->status == 400);
  CHECK(g.http.Post("/api/v1/firmware/a%2Fb", g.auth(tp), blob, "application/octet-stream")->status != 200);
  CHECK(g.http.Post("/api/v1/firmware/big.bin", g.auth(tp), std::string(8193, 'x'), "application/octet-stream")->status == 413);
  CHECK(g.http.Post("/api/v1/firmware/x.bin", g.auth(admin), blob, "application/octet-stream")->status == 403);
  CHECK(g.http.Post("/api/v1/firmware/x.bin", blob, "application/octet-stream")->status == 401);
}

TEST_CASE("records and profiles") {
  testbed::TestBed bed(fleet());
  Running g(bed, bed.gateway_config());
  const std::string tp = g.login("tp", "tp-pw");
  const std::string eng = g.login("eng", "eng-pw");
  const std::string admin = g.login("admin", "admin-pw");

  CHECK(g.http.Get("/api/v1/threat-profiles/latest", g.auth(admin))->status == 404);
  CHECK(g.http.Get("/api/v1/threat-profiles/latest", g.auth(eng))->status == 403);

  REQUIRE(g.command(eng, "store_s " + testbed::role_key_hex(Role::Engineer) + " 1")->status == 200);

  auto all = g.http.Get("/api/v1/records", g.auth(eng));
  REQUIRE(all->status == 200);
  CHECK(json::parse(all->body).at("records").size() == 2);

  auto nonconf = g.http.Get("/api/v1/records?category=non-confidential", g.auth(tp));
  REQUIRE(nonconf->status == 200);
  const auto recs = json::parse(nonconf->body).at("records");
  REQUIRE(recs.size() == 1);
  CHECK(recs[0].at("snapshot").size() == 768);
  CHECK(recs[0].at("snapshot")[0x10] == json::array({0x10, "00AA"}));

  // Without a category a third party sees only what it may see.
  auto scoped = g.http.Get("/api/v1/records", g.auth(tp));
  REQUIRE(scoped->status == 200);
  const auto scoped_recs = json::parse(scoped->body).at("records");
  REQUIRE(scoped_recs.size() == 1);
  CHECK(scoped_recs[0].at("category") == "non-confidential");
  CHECK(g.http.Get("/api/v1/records?category=confidential", g.auth(tp))->status == 403);
  CHECK(g.http.Get("/api/v1/records?asset=x", g.auth(eng))->status == 400);

  auto gen = g.command(admin, "gen_threat_profile_s " + testbed::role_key_hex(Role::Administrator));
  REQUIRE(gen->status == 200);
  const auto id = json::parse(gen->body).at("payload").at("profile_id").get<std::uint64_t>();
  auto latest = g.http.Get("/api/v1/threat-profiles/latest", g.auth(admin));
  REQUIRE(latest->status == 200);
  CHECK(latest->get_header_value("X-Profile-Id") == std::to_string(id));
  const auto doc = json::parse(latest->body);
  CHECK(doc.at("clients").contains("eng"));
  CHECK(g.http.Get("/api/v1/threat-profiles/" + std::to_string(id), g.auth(admin))->body == latest->body);
  CHECK(g.http.Get("/api/v1/threat-profiles/999", g.auth(admin))->status == 404);

  CHECK(g.nw_log_count("svr.records") == 5);
  CHECK(g.nw_log_count("svr.profiles") == 5);
}

TEST_CASE("gateway refuses an untrained secure world") {
  testbed::BedOptions opts;
  opts.train = false;
  testbed::TestBed bed(fleet(), opts);
  bed.start_secure("normal");
  try {
    gateway::Gateway gw(bed.gateway_config());
    FAIL("gateway came up");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::NoTrainedHash);
  }
}

TEST_CASE("gateway config file") {
  const auto c = gateway::GatewayConfig::parse(R"({
    "listen": "0.0.0.0:9000", "sw_endpoint": "sw.sock", "data_dir": "/var/ecig",
    "users": "users.json", "upload_cap": 1024,
    "scheduler": {"key": ")" + std::string(64, 'a') + R"(", "assets": [1, 2], "store_interval_s": 5}
  })", "/etc/ecig");
  CHECK(c.sw_endpoint == "/etc/ecig/sw.sock");
  CHECK(c.staging_dir == "/var/ecig/staging");
  CHECK(c.users_file == "/etc/ecig/users.json");
  CHECK(c.upload_cap == 1024);
  CHECK(c.scheduler_enabled);
  CHECK(c.scheduled_assets == std::vector<std::uint32_t>{1, 2});
  CHECK(c.store_interval == std::chrono::seconds(5));
  CHECK_THROWS_AS(gateway::GatewayConfig::parse(R"({"sw_endpoint":"x"})"), Error);
  CHECK_THROWS_AS(gateway::GatewayConfig::parse(R"({"sw_endpoint":"x","data_dir":"d","users":"u","scheduler":{"key":"ab"}})"), Error);
}
