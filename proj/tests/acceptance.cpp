// End-to-end acceptance run. One line per criterion, PASS or FAIL, and a
// non-zero exit status if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "ecig/actmgr/activity_manager.hpp"
#include "ecig/core/crypto.hpp"
#include "ecig/core/error.hpp"
#include "ecig/modbus/frame.hpp"
#include "ecig/threatprofile/profile.hpp"
#include "support/fixtures.hpp"
#include "support/golden_modbus.hpp"
#include "support/profile_fixture.hpp"
#include "support/ref_hash.hpp"
#include "support/ref_modbus.hpp"
#include "support/segregation_oracle.hpp"

using namespace ecig;
using actmgr::Status;
using cmdparse::CommandKind;
using secmgr::Role;
using Steps = std::vector<std::string>;

namespace {

class Checks {
 public:
  void expect(bool ok, const std::string& what) {
    ++total_;
    if (ok) return;
    ++failed_;
    if (first_.empty()) first_ = what;
  }
  bool ok() const { return failed_ == 0 && total_ > 0; }
  std::string summary() const {
    std::ostringstream s;
    s << total_ - failed_ << "/" << total_ << " checks";
    if (!first_.empty()) s << "; first failure: " << first_;
    return s.str();
  }

 private:
  int total_ = 0;
  int failed_ = 0;
  std::string first_;
};

std::string key_hex(Role r) { return testbed::role_key_hex(r); }

template <typename T>
std::string str(const T& v) {
  std::ostringstream s;
  s << v;
  return s.str();
}

std::string join(const Steps& s) {
  std::string out;
  for (const auto& x : s) out += (out.empty() ? "" : ",") + x;
  return out;
}

// Wraps the real proxy and notes how many Modbus frames each asset had seen
// at the moment each security-manager call was made.
class Probe final : public actmgr::SecurityService {
 public:
  Probe(actmgr::SecurityService& inner, testbed::TestBed& bed) : inner_(inner), bed_(bed) {}

  actmgr::AddressGrant validate_address(std::uint32_t asset, std::uint16_t addr, std::uint32_t len,
                                        secmgr::Access a, secmgr::Privilege p,
                                        const actmgr::FlowContext& ctx) override {
    note(asset);
    return inner_.validate_address(asset, addr, len, a, p, ctx);
  }
  secmgr::AccessDecision validate_key(ByteView key, Role role, const actmgr::FlowContext& ctx) override {
    note(1);
    return inner_.validate_key(key, role, ctx);
  }
  secmgr::AccessDecision verify_firmware_proof(std::uint32_t asset, ByteView d, ByteView p,
                                               const actmgr::FlowContext& ctx) override {
    return inner_.verify_firmware_proof(asset, d, p, ctx);
  }
  secmgr::AssetLayout validate_asset(std::uint32_t asset, const actmgr::FlowContext& ctx) override {
    note(asset);
    return inner_.validate_asset(asset, ctx);
  }
  Bytes issue_storage_key() override { return inner_.issue_storage_key(); }

  std::vector<std::uint64_t> frames_at_call;

 private:
  void note(std::uint32_t asset) { frames_at_call.push_back(bed_.asset(asset).frames_received()); }

  actmgr::SecurityService& inner_;
  testbed::TestBed& bed_;
};

std::vector<testbed::AssetSpec> c2_policies() {
  testbed::AssetSpec a;
  a.id = 1;
  testbed::AssetSpec b;
  b.id = 2;
  b.space = {0x0010, 0x010F};
  b.confidential = {{0x0020, 0x002F}, {0x0080, 0x0080}, {0x00F0, 0x010F}};
  testbed::AssetSpec c;
  c.id = 3;
  c.space = {0x0000, 0x00FF};
  c.confidential = {};
  // Confidential words are recognisable: high byte 0xC5.
  for (auto* s : {&a, &b}) {
    for (auto [lo, hi] : s->confidential) {
      std::vector<std::uint16_t> words;
      for (std::uint32_t x = lo; x <= hi; ++x) words.push_back(static_cast<std::uint16_t>(0xC500 | (x & 0xFF)));
      s->preload[static_cast<std::uint16_t>(lo)] = words;
    }
  }
  return {a, b, c};
}

ref::Policy oracle_of(const testbed::AssetSpec& s) {
  ref::Policy p;
  p.space_lo = s.space.lo;
  p.space_hi = s.space.hi;
  for (const auto& r : s.confidential) p.confidential.emplace_back(r.lo, r.hi);
  return p;
}

// Sequence fidelity for the five activities.
void c1(Checks& c) {
  testbed::AssetSpec spec;
  spec.id = 1;
  testbed::TestBed bed({spec});
  testbed::NwStack nw(bed);
  Probe probe(*nw.sm, bed);
  actmgr::ActivityOptions opts;
  opts.staging_dir = bed.dir() / "nw" / "staging";
  opts.modbus_timeout_ms = 1000;
  actmgr::ActivityManager am(probe, *nw.dc, system_clock(), opts);
  testbed::write_file(opts.staging_dir / "fw.bin", crypto::random_bytes(2000));

  struct Case {
    std::string line;
    Role role;
    Steps nw;
    Steps sw;
  };
  const std::vector<Case> cases = {
      {"read 1 0x0010 4", Role::ThirdParty,
       {"cp.parse", "am.role_gate", "sm.validate_address", "nc.connect", "nc.read", "nc.disconnect", "read"},
       {"validate_address"}},
      {"update 1 fw.bin", Role::ThirdParty,
       {"cp.parse", "am.role_gate", "sm.validate_asset", "fw.load_image", "nc.connect", "nc.transfer_firmware",
        "nc.disconnect", "sm.verify_firmware_proof", "update"},
       {"validate_asset", "verify_firmware_proof"}},
      {"read_s " + key_hex(Role::Engineer) + " 1 0x0100 4", Role::Engineer,
       {"cp.parse", "am.role_gate", "sm.validate_key", "sm.validate_address", "nc.connect", "nc.read",
        "nc.disconnect", "read_s"},
       {"validate_key", "validate_address"}},
      {"store_s " + key_hex(Role::Engineer) + " 1", Role::Engineer,
       {"cp.parse", "am.role_gate", "sm.validate_key", "sm.validate_asset", "nc.connect", "nc.read",
        "nc.disconnect", "dc.put_record", "dc.put_record", "store_s"},
       {"validate_key", "validate_asset"}},
      {"gen_threat_profile_s " + key_hex(Role::Administrator), Role::Administrator,
       {"cp.parse", "am.role_gate", "sm.validate_key", "dc.read_logs", "tpw.build_profile", "dc.put_profile",
        "gen_threat_profile_s"},
       {"validate_key"}},
  };
  for (const auto& k : cases) {
    const std::string name = k.line.substr(0, k.line.find(' '));
    const auto frames_before = bed.asset(1).frames_received();
    probe.frames_at_call.clear();
    const auto r = am.submit(k.line, testbed::principal(k.role));
    c.expect(r.status == Status::Ok, name + " status " + actmgr::to_string(r.status) + " " + r.reason);
    const auto nw_steps = nw.flow_steps(r.flow);
    c.expect(nw_steps == k.nw, name + " NW order " + join(nw_steps));
    const auto sw_steps = testbed::sw_flow_steps(bed, r.flow);
    c.expect(sw_steps == k.sw, name + " SW order " + join(sw_steps));
    // No Modbus traffic before the security manager has answered.
    if (!probe.frames_at_call.empty()) {
      c.expect(probe.frames_at_call.front() == frames_before, name + " frame before validation");
    }
    // Every pre-network SW decision is on record before the connection opens.
    std::int64_t sw_pre = 0;
    for (const auto& s : bed.sw_records()) {
      if (s.flow == r.flow && s.activity != "verify_firmware_proof") sw_pre = std::max(sw_pre, s.timestamp_ms);
    }
    for (const auto& rec : nw.flow_records(r.flow)) {
      if (rec.activity == "nc.connect") c.expect(sw_pre <= rec.timestamp_ms, name + " connect before SW validation");
    }
  }
}

// Segregation: oracle agreement through the secure world, and a third-party
// fuzz run checked against the simulator's memory.
void c2(Checks& c) {
  const auto specs = c2_policies();
  testbed::TestBed bed(specs);
  testbed::NwStack nw(bed);
  std::mt19937 rng(2024);
  for (const auto& spec : specs) {
    const auto policy = oracle_of(spec);
    int disagreements = 0;
    for (int i = 0; i < 10000; ++i) {
      const auto addr = static_cast<std::uint16_t>(rng() % (spec.space.hi + 64));
      const std::uint32_t len = 1 + rng() % 160;
      actmgr::FlowContext ctx{"acceptance", static_cast<std::uint64_t>(i)};
      const auto grant = nw.sm->validate_address(spec.id, addr, len, secmgr::Access::Read,
                                                 secmgr::Privilege::NonConfidentialOnly, ctx);
      const auto want = ref::expected_third_party(policy, addr, len);
      ref::Expect got = ref::Expect::Allow;
      if (!grant.decision.allowed()) {
        got = grant.decision.reason() == secmgr::DenyReason::OutOfRange ? ref::Expect::OutOfRange
                                                                        : ref::Expect::ConfidentialOverlap;
      }
      if (got != want) ++disagreements;
    }
    c.expect(disagreements == 0, "asset " + str(spec.id) + " disagreements " + str(disagreements));
  }

  const auto tp = testbed::principal(Role::ThirdParty);
  std::map<std::uint32_t, std::vector<std::uint16_t>> conf_before;
  for (const auto& spec : specs) conf_before[spec.id] = bed.asset(spec.id).peek(0, spec.space.hi + 1);
  int leaked = 0, mismatched = 0, ok_reads = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto& spec = specs[rng() % specs.size()];
    const auto policy = oracle_of(spec);
    const auto addr = static_cast<std::uint16_t>(rng() % (spec.space.hi + 16));
    const std::uint32_t len = 1 + rng() % 40;
    if (rng() % 4 == 0) {
      std::string line = "write " + str(spec.id) + " " + str(addr) + " " + str(len);
      for (std::uint32_t k = 0; k < len; ++k) {
        char buf[8];
        std::snprintf(buf, sizeof buf, " %04X", static_cast<unsigned>(rng() & 0x3FFF));
        line += buf;
      }
      nw.am->submit(line, tp);
      continue;
    }
    const auto r = nw.am->submit("read " + str(spec.id) + " " + str(addr) + " " + str(len), tp);
    if (r.status != Status::Ok) continue;
    ++ok_reads;
    const auto& words = std::get<actmgr::RegisterWords>(r.payload).words;
    const auto truth = bed.asset(spec.id).peek(addr, static_cast<std::uint16_t>(len));
    if (words != truth) ++mismatched;
    for (std::uint32_t k = 0; k < words.size(); ++k) {
      if (ref::address_confidential(policy, addr + k) || (words[k] & 0xFF00) == 0xC500) ++leaked;
    }
  }
  c.expect(ok_reads > 100, "too few successful reads " + str(ok_reads));
  c.expect(leaked == 0, "confidential words returned " + str(leaked));
  c.expect(mismatched == 0, "reads disagreeing with the simulator " + str(mismatched));
  for (const auto& spec : specs) {
    const auto after = bed.asset(spec.id).peek(0, spec.space.hi + 1);
    for (auto [lo, hi] : spec.confidential) {
      for (std::uint32_t a = lo; a <= hi; ++a) {
        c.expect(after[a] == conf_before[spec.id][a], "confidential register changed at " + str(a));
      }
    }
  }
}

// Attestation against single-byte mutations of the trained image.
void c3(Checks& c) {
  testbed::AssetSpec spec;
  spec.id = 1;
  testbed::TestBed bed({spec});
  auto ctx = worldlink::WorldContext::initialize(bed.sw_endpoint());
  const Bytes image = testbed::read_file(bed.image());
  std::mt19937 rng(77);
  std::set<std::size_t> positions;
  while (positions.size() < 100) positions.insert(rng() % image.size());
  int refused = 0, dead = 0;
  std::vector<std::uint64_t> refused_ids;
  for (std::size_t pos : positions) {
    Bytes mutated = image;
    mutated[pos] ^= static_cast<std::uint8_t>(1 + rng() % 255);
    testbed::write_file(bed.dir() / "mutated.img", mutated);
    try {
      auto s = ctx.open_session(secmgr::kTrustedAppId, bed.dir() / "mutated.img");
    } catch (const worldlink::AttestationFailure& f) {
      ++refused;
      refused_ids.push_back(f.session_id());
    } catch (const Error&) {
    }
  }
  c.expect(refused == 100, "mutations refused " + str(refused) + "/100");
  for (auto id : refused_ids) {
    worldlink::WorldCommand cmd(static_cast<std::uint32_t>(secmgr::TaCommand::Echo),
                                {worldlink::Parameter::in({1, 2, 3}), worldlink::Parameter::out()});
    try {
      ctx.invoke(id, cmd);
    } catch (const Error&) {
      ++dead;
    }
  }
  c.expect(dead == static_cast<int>(refused_ids.size()), "post-failure invokes failing " + str(dead));
  try {
    auto s = ctx.open_session(secmgr::kTrustedAppId, bed.image());
    c.expect(s.attested(), "unmutated session not attested");
    actmgr::SmProxy sm(std::move(s));
    c.expect(sm.echo(Bytes{9, 8, 7}) == Bytes{9, 8, 7}, "echo over the attested session");
    sm.session().close();
  } catch (const Error& e) {
    c.expect(false, std::string("unmutated image refused: ") + e.what());
  }
  ctx.finalize();
}

// Four parameters at most, on the client and in the secure world.
void c4(Checks& c) {
  testbed::AssetSpec spec;
  spec.id = 1;
  testbed::TestBed bed({spec});
  testbed::NwStack nw(bed);
  using worldlink::Parameter;
  std::vector<Parameter> four{Parameter::in(to_bytes(R"({"asset":1})")), Parameter::in(Bytes(32, 1)),
                              Parameter::in(Bytes(32, 2)), Parameter::out()};
  auto five = four;
  five.push_back(Parameter::in({0}));
  bool rejected = false;
  try {
    worldlink::WorldCommand cmd(3, five);
  } catch (const Error& e) {
    rejected = e.code() == Errc::TooManyParameters;
  }
  c.expect(rejected, "five-parameter command constructed");
  bool built = true;
  try {
    worldlink::WorldCommand cmd(3, four);
  } catch (const Error&) {
    built = false;
  }
  c.expect(built, "four-parameter command refused");

  worldlink::Message m;
  m.kind = worldlink::MessageKind::InvokeCommand;
  m.context_id = nw.ctx.id();
  m.session_id = nw.sm->session().id();
  m.command_id = static_cast<std::uint32_t>(secmgr::TaCommand::VerifyFirmwareProof);
  m.params = five;
  const auto refused = nw.ctx.exchange(m);
  c.expect(refused.status == std::string("TooManyParameters"), "SW accepted five: " + str(refused.status.value_or("")));
  m.params = four;
  const auto accepted = nw.ctx.exchange(m);
  c.expect(accepted.status == std::string("Ok"), "SW refused four: " + str(accepted.status.value_or("")));
}

// Firmware proof end to end, then twenty corrupted chunks.
void c5(Checks& c) {
  testbed::AssetSpec spec;
  spec.id = 1;
  testbed::TestBed bed({spec});
  testbed::NwStack nw(bed);
  const Bytes image = crypto::random_bytes(3000);
  testbed::write_file(bed.dir() / "nw" / "staging" / "fw.bin", image);
  const auto tp = testbed::principal(Role::ThirdParty);

  const auto ok = nw.am->submit("update 1 fw.bin", tp);
  c.expect(ok.status == Status::Ok, "clean update " + ok.reason);
  if (ok.status == Status::Ok) {
    const auto& receipt = std::get<actmgr::InstallReceipt>(ok.payload);
    const Bytes digest = ref::sha256(image);
    c.expect(receipt.image_digest == digest, "digest differs from independent SHA-256");
    c.expect(receipt.proof == ref::hmac_sha256(testbed::device_key(1), digest),
             "proof differs from independent HMAC-SHA256");
  }

  std::mt19937 rng(5);
  int proof_invalid = 0;
  for (int fault = 0; fault < 20; ++fault) {
    const std::uint16_t target = static_cast<std::uint16_t>(fault % 3);
    const auto salt = rng();
    nw.am->set_connection_hook([target, salt](netclient::AssetConnection& conn) {
      conn.set_outbound_tap([target, salt](Bytes& wire) {
        if (wire.size() > 10 && wire[7] == 0x64 && get_u16(wire, 8) == target) {
          wire[10 + salt % (wire.size() - 10)] ^= static_cast<std::uint8_t>(1 + (salt >> 8) % 255);
        }
      });
    });
    const auto r = nw.am->submit("update 1 fw.bin", tp);
    if (r.status == Status::Failed && r.reason == "ProofInvalid") ++proof_invalid;
  }
  c.expect(proof_invalid == 20, "faults caught " + str(proof_invalid) + "/20");
}

// Modbus framing against the reference vectors.
void c6(Checks& c) {
  const Bytes canonical{0x00, 0x01, 0x00, 0x00, 0x00, 0x06, 0x01, 0x03, 0x00, 0x10, 0x00, 0x02};
  c.expect(modbus::encode(modbus::read_request(1, 1, 0x0010, 2)) == canonical, "canonical read request");
  const auto table = ref::golden_table();
  c.expect(table.size() == 10, "golden table size");
  for (const auto& g : table) {
    c.expect(modbus::encode(g.frame) == g.wire, std::string("encode ") + g.name);
    c.expect(modbus::decode(g.wire) == g.frame, std::string("decode ") + g.name);
  }
  std::mt19937 rng(99);
  int bad = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto tid = static_cast<std::uint16_t>(rng());
    const auto unit = static_cast<std::uint8_t>(rng());
    const auto addr = static_cast<std::uint16_t>(rng());
    modbus::Frame f;
    Bytes reference;
    if (i % 2 == 0) {
      const auto count = static_cast<std::uint16_t>(1 + rng() % 125);
      f = modbus::read_request(tid, unit, addr, count);
      reference = ref::modbus::read_holding(tid, unit, addr, count);
    } else {
      std::vector<std::uint16_t> words(1 + rng() % 123);
      for (auto& w : words) w = static_cast<std::uint16_t>(rng());
      f = modbus::write_request(tid, unit, addr, words);
      reference = ref::modbus::write_multiple(tid, unit, addr, words);
    }
    const Bytes wire = modbus::encode(f);
    if (wire != reference || !(modbus::decode(wire) == f)) ++bad;
  }
  c.expect(bad == 0, "random round trips failing " + str(bad));
}

bool contains(const Bytes& hay, const Bytes& needle) {
  return std::search(hay.begin(), hay.end(), needle.begin(), needle.end()) != hay.end();
}

// Records are encrypted at rest.
void c7(Checks& c) {
  const std::string marker_text = "ZqX7!marker#Pw9k";
  std::vector<std::uint16_t> marker;
  for (std::size_t i = 0; i < 16; i += 2) {
    marker.push_back(static_cast<std::uint16_t>((std::uint8_t(marker_text[i]) << 8) | std::uint8_t(marker_text[i + 1])));
  }
  testbed::AssetSpec spec;
  spec.id = 1;
  spec.preload[0x0040] = marker;
  spec.preload[0x0140] = marker;
  testbed::TestBed bed({spec});
  testbed::NwStack nw(bed);
  const auto sched = testbed::principal(Role::Scheduler);
  int stored = 0;
  for (int i = 0; i < 50; ++i) {
    stored += nw.am->submit("store_s " + key_hex(Role::Scheduler) + " 1", sched).status == Status::Ok;
  }
  c.expect(stored == 50, "store_s ticks " + str(stored) + "/50");

  std::vector<Bytes> needles;
  needles.push_back(to_bytes(marker_text));
  Bytes swapped;
  for (auto w : marker) {
    swapped.push_back(static_cast<std::uint8_t>(w & 0xFF));
    swapped.push_back(static_cast<std::uint8_t>(w >> 8));
  }
  needles.push_back(swapped);
  std::string hex_upper, hex_lower;
  for (auto w : marker) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "%04X", w);
    hex_upper += buf;
    std::snprintf(buf, sizeof buf, "%04x", w);
    hex_lower += buf;
  }
  needles.push_back(to_bytes(hex_upper));
  needles.push_back(to_bytes(hex_lower));
  needles.push_back(to_bytes("[64," + str(marker[0]) + "]"));
  needles.push_back(to_bytes(str(marker[0]) + "," + str(marker[1])));

  int files = 0, hits = 0;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(nw.dc->store_dir())) {
    if (!entry.is_regular_file()) continue;
    ++files;
    const Bytes blob = testbed::read_file(entry.path());
    for (const auto& n : needles) hits += contains(blob, n);
  }
  c.expect(files >= 100, "files under the store " + str(files));
  c.expect(hits == 0, "plaintext marker occurrences " + str(hits));

  const auto truth = bed.asset(1).peek(0, 0x400);
  const auto records = nw.dc->get_records({}, secmgr::Privilege::Full);
  c.expect(records.size() == 100, "records read back " + str(records.size()));
  int wrong = 0;
  for (const auto& rec : records) {
    if (rec.snapshot.size() != (rec.category == datastore::Category::Confidential ? 256u : 768u)) ++wrong;
    for (const auto& [addr, word] : rec.snapshot) wrong += word != truth[addr];
  }
  c.expect(wrong == 0, "round-trip mismatches " + str(wrong));

  std::filesystem::path victim;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(nw.dc->store_dir() / "confidential")) {
    if (entry.is_regular_file()) {
      victim = entry.path();
      break;
    }
  }
  Bytes blob = testbed::read_file(victim);
  blob[blob.size() / 2] ^= 0x01;
  testbed::write_file(victim, blob);
  std::optional<Errc> code;
  try {
    nw.dc->get_records({}, secmgr::Privilege::Full);
  } catch (const Error& e) {
    code = e.code();
  }
  c.expect(code == Errc::DecryptFailure,
           std::string("flipped byte gave ") + (code ? to_string(*code) : "no error"));
}

// The role gate against a literal table of who may issue what.
void c8(Checks& c) {
  static const std::map<CommandKind, std::set<Role>> table = {
      {CommandKind::Read, {Role::ThirdParty}},
      {CommandKind::Write, {Role::ThirdParty}},
      {CommandKind::Update, {Role::ThirdParty}},
      {CommandKind::ReadS, {Role::Engineer, Role::Scheduler}},
      {CommandKind::WriteS, {Role::Engineer, Role::Scheduler}},
      {CommandKind::StoreS, {Role::Engineer, Role::Scheduler}},
      {CommandKind::GenThreatProfileS, {Role::Administrator, Role::Scheduler}},
  };
  testbed::AssetSpec spec;
  spec.id = 1;
  testbed::TestBed bed({spec});
  testbed::NwStack nw(bed);
  testbed::write_file(bed.dir() / "nw" / "staging" / "fw.bin", crypto::random_bytes(1500));

  int cells = 0;
  for (auto kind : cmdparse::kAllKinds) {
    for (auto role : secmgr::kAllRoles) {
      ++cells;
      const std::string k = key_hex(role);
      std::string line;
      switch (kind) {
        case CommandKind::Read: line = "read 1 0x10 2"; break;
        case CommandKind::Write: line = "write 1 0x10 1 0007"; break;
        case CommandKind::Update: line = "update 1 fw.bin"; break;
        case CommandKind::ReadS: line = "read_s " + k + " 1 0x100 2"; break;
        case CommandKind::WriteS: line = "write_s " + k + " 1 0x100 1 0007"; break;
        case CommandKind::StoreS: line = "store_s " + k + " 1"; break;
        case CommandKind::GenThreatProfileS: line = "gen_threat_profile_s " + k; break;
      }
      const auto r = nw.am->dispatch(cmdparse::parse(line), testbed::principal(role));
      const std::string cell = std::string(cmdparse::to_string(kind)) + "/" + secmgr::to_string(role);
      if (table.at(kind).count(role)) {
        c.expect(r.status == Status::Ok, cell + " expected Ok, got " + actmgr::to_string(r.status) + " " + r.reason);
      } else {
        c.expect(r.status == Status::Denied && r.reason == "RoleForbidden", cell + " expected RoleForbidden");
        c.expect(testbed::sw_flow_steps(bed, r.flow).empty(), cell + " reached the secure world");
      }
    }
  }
  c.expect(cells == 28, "cell count " + str(cells));
}

// STRIDE correlation.
void c9(Checks& c) {
  using threatprofile::Element;
  using threatprofile::Threat;
  using T = Threat;
  const std::map<Element, std::set<Threat>> table = {
      {Element::ExternalEntity, {T::Spoofing, T::Repudiation}},
      {Element::Process,
       {T::Spoofing, T::Tampering, T::Repudiation, T::InformationDisclosure, T::DenialOfService,
        T::ElevationOfPrivilege}},
      {Element::DataFlow, {T::Tampering, T::InformationDisclosure, T::DenialOfService}},
      {Element::DataStore, {T::Tampering, T::Repudiation, T::InformationDisclosure, T::DenialOfService}},
  };
  int cells = 0;
  for (Element e : threatprofile::kAllElements) {
    const auto got = threatprofile::stride_map(e);
    const std::set<Threat> set(got.begin(), got.end());
    for (Threat t : threatprofile::kAllThreats) {
      ++cells;
      c.expect(set.count(t) == table.at(e).count(t), "cell " + str(cells));
    }
  }
  c.expect(cells == 24, "cell count " + str(cells));
}

// Profiler numbers on the hand-computed fixture.
void c10(Checks& c) {
  const auto logs = ref::hundred_records();
  const auto tree = threatprofile::build_profile(logs, {});
  // 80 terminal: 71 Ok, 5 Denied, 4 Failed; latency sum 2000.
  c.expect(tree.terminal_records == 80, "terminal records");
  c.expect(tree.system.failure_rate == 4.0 / 80, "failure rate " + str(tree.system.failure_rate));
  c.expect(tree.system.availability == 76.0 / 80, "availability " + str(tree.system.availability));
  c.expect(tree.system.avg_latency_ms == 2000.0 / 80, "avg latency " + str(tree.system.avg_latency_ms));
  const std::map<std::string, std::uint64_t> per_client = {{"tp", 30}, {"eng", 20}, {"scheduler", 20}, {"admin", 10}};
  c.expect(tree.clients.size() == per_client.size(), "client count");
  for (const auto& [who, count] : per_client) {
    std::uint64_t n = 0;
    if (tree.clients.count(who)) {
      for (const auto& [a, leaf] : tree.clients.at(who).activities) n += leaf.count;
    }
    c.expect(n == count, "count for " + who);
  }
  const auto& read = tree.clients.at("tp").activities.at("read");
  c.expect(read.ok == 24 && read.denied == 4 && read.failed == 2, "tp read split");
  c.expect(read.latency_mean_ms == 10.0, "tp read latency");

  c.expect(threatprofile::serialize(threatprofile::build_profile(logs, {0, 10})) ==
               R"({"clients":{},"root":{"from_ms":0,"log_records":0,"terminal_records":0,"to_ms":10},)"
               R"("system":{"availability":1.0,"avg_latency_ms":0.0,"failure_rate":0.0}})",
           "empty window profile");
}

// Scheduler: periodic store_s, every record behind an audited key check.
void c11(Checks& c) {
  testbed::AssetSpec a;
  a.id = 1;
  testbed::AssetSpec b;
  b.id = 2;
  b.confidential = {};
  testbed::TestBed bed({a, b});
  testbed::NwStack nw(bed);
  actmgr::ScheduleConfig cfg;
  cfg.store_interval = std::chrono::seconds(1);
  cfg.assets = {1, 2};
  cfg.scheduler_key = testbed::role_key(Role::Scheduler);
  cfg.profiles = false;
  {
    actmgr::Scheduler s(*nw.am, cfg);
    s.start();
    std::this_thread::sleep_for(std::chrono::seconds(5));
    s.stop();
  }
  const auto records = nw.dc->get_records({}, secmgr::Privilege::Full);
  c.expect(records.size() >= 8, "records persisted " + str(records.size()));

  std::map<std::uint64_t, std::int64_t> key_checked;  // flow -> SW timestamp
  for (const auto& r : bed.sw_records()) {
    if (r.activity == "validate_key" && r.outcome == audit::Outcome::Ok && r.principal == "scheduler" &&
        r.detail == "role=Scheduler" && r.flow) {
      key_checked[*r.flow] = r.timestamp_ms;
    }
  }
  std::size_t puts = 0;
  for (const auto& r : nw.dc->read_logs({}, audit::World::NW)) {
    if (r.activity != "dc.put_record" || r.outcome != audit::Outcome::Ok) continue;
    ++puts;
    const bool checked = r.flow && key_checked.count(*r.flow) && key_checked.at(*r.flow) <= r.timestamp_ms;
    c.expect(checked, "record without a prior key check, flow " + str(r.flow.value_or(0)));
  }
  c.expect(puts == records.size(), "put steps " + str(puts) + " vs records " + str(records.size()));
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<void(Checks&)>>> criteria = {
      {"sequence fidelity", c1},  {"segregation soundness", c2}, {"attestation", c3},
      {"four-parameter contract", c4}, {"firmware proof", c5},  {"modbus conformance", c6},
      {"encrypted at rest", c7},  {"role matrix", c8},           {"STRIDE map", c9},
      {"profiler correctness", c10}, {"scheduler", c11},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Checks checks;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      criteria[i].second(checks);
    } catch (const std::exception& e) {
      checks.expect(false, std::string("exception: ") + e.what());
    }
    const auto secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool pass = checks.ok();
    failures += !pass;
    char timing[32];
    std::snprintf(timing, sizeof timing, "%.1fs", secs);
    std::cout << "C" << i + 1 << " " << (pass ? "PASS" : "FAIL") << " " << criteria[i].first << " ("
              << checks.summary() << ", " << timing << ")" << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
