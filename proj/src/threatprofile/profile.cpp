#include "ecig/threatprofile/profile.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>

#include "ecig/core/error.hpp"

namespace ecig::threatprofile {

using nlohmann::json;

namespace {

constexpr std::string_view kCommandActivities[] = {"read",    "write",   "update",
                                                   "read_s",  "write_s", "store_s",
                                                   "gen_threat_profile_s"};

// Which element a flag belongs to, from the reasons behind it.
Element element_for(const LeafStats& leaf, bool denial) {
  std::string dominant;
  std::uint64_t best = 0;
  for (const auto& [reason, n] : leaf.reasons) {
    if (n > best) {
      best = n;
      dominant = reason;
    }
  }
  if (denial && (dominant == "BadKey" || dominant == "RoleForbidden" || dominant == "BadCredentials")) {
    return Element::ExternalEntity;
  }
  if (!denial) {
    if (dominant == "NetworkError" || dominant == "TransferError" || dominant == "Timeout" ||
        dominant == "ConnectRefused" || dominant == "ExceptionResponse") {
      return Element::DataFlow;
    }
    if (dominant == "StorageError" || dominant == "DecryptFailure" || dominant == "NoStorageKey" ||
        dominant == "StorageFull") {
      return Element::DataStore;
    }
  }
  return Element::Process;
}

double rate(const LeafStats* leaf, bool denial) {
  if (!leaf || leaf->count == 0) return 0.0;
  return static_cast<double>(denial ? leaf->denied : leaf->failed) / static_cast<double>(leaf->count);
}

const LeafStats* find_leaf(const ThreatProfileTree& t, const std::string& principal,
                           const std::string& activity) {
  auto c = t.clients.find(principal);
  if (c == t.clients.end()) return nullptr;
  auto a = c->second.activities.find(activity);
  return a == c->second.activities.end() ? nullptr : &a->second;
}

}  // namespace

const char* to_string(Element e) noexcept {
  switch (e) {
    case Element::ExternalEntity: return "ExternalEntity";
    case Element::Process: return "Process";
    case Element::DataFlow: return "DataFlow";
    case Element::DataStore: return "DataStore";
  }
  return "Process";
}

const char* to_string(Threat t) noexcept {
  switch (t) {
    case Threat::Spoofing: return "Spoofing";
    case Threat::Tampering: return "Tampering";
    case Threat::Repudiation: return "Repudiation";
    case Threat::InformationDisclosure: return "InformationDisclosure";
    case Threat::DenialOfService: return "DenialOfService";
    case Threat::ElevationOfPrivilege: return "ElevationOfPrivilege";
  }
  return "Spoofing";
}

std::vector<Threat> stride_map(Element element) {
  using T = Threat;
  switch (element) {
    case Element::ExternalEntity: return {T::Spoofing, T::Repudiation};
    case Element::Process:
      return {T::Spoofing, T::Tampering, T::Repudiation, T::InformationDisclosure,
              T::DenialOfService, T::ElevationOfPrivilege};
    case Element::DataFlow: return {T::Tampering, T::InformationDisclosure, T::DenialOfService};
    case Element::DataStore:
      return {T::Tampering, T::Repudiation, T::InformationDisclosure, T::DenialOfService};
  }
  return {};
}

bool is_command_activity(std::string_view activity) noexcept {
  return std::find(std::begin(kCommandActivities), std::end(kCommandActivities), activity) !=
         std::end(kCommandActivities);
}

bool is_terminal(const audit::AuditRecord& rec) noexcept {
  return rec.outcome.has_value() && is_command_activity(rec.activity);
}

ThreatProfileTree build_profile(const std::vector<audit::AuditRecord>& logs,
                                const audit::TimeWindow& window) {
  ThreatProfileTree tree;
  tree.window = window;
  std::map<std::pair<std::string, std::string>, std::pair<std::int64_t, std::uint64_t>> latency;
  std::int64_t latency_sum = 0;
  std::uint64_t latency_n = 0;
  std::uint64_t ok = 0, denied = 0, failed = 0;

  for (const auto& rec : logs) {
    if (!window.contains(rec.timestamp_ms)) continue;
    ++tree.log_records;
    auto& client = tree.clients[rec.principal];
    client.principal = rec.principal;
    if (!is_terminal(rec)) {
      ++client.step_records;
      continue;
    }
    ++tree.terminal_records;
    auto& leaf = client.activities[rec.activity];
    ++leaf.count;
    switch (*rec.outcome) {
      case audit::Outcome::Ok: ++leaf.ok; ++ok; break;
      case audit::Outcome::Denied: ++leaf.denied; ++denied; break;
      case audit::Outcome::Failed: ++leaf.failed; ++failed; break;
    }
    if (*rec.outcome != audit::Outcome::Ok && rec.reason) ++leaf.reasons[*rec.reason];
    if (rec.latency_ms) {
      auto& [sum, n] = latency[{rec.principal, rec.activity}];
      sum += *rec.latency_ms;
      ++n;
      leaf.latency_max_ms = std::max(leaf.latency_max_ms, *rec.latency_ms);
      latency_sum += *rec.latency_ms;
      ++latency_n;
    }
  }
  for (const auto& [key, acc] : latency) {
    tree.clients[key.first].activities[key.second].latency_mean_ms =
        static_cast<double>(acc.first) / static_cast<double>(acc.second);
  }
  if (tree.terminal_records > 0) {
    const auto total = static_cast<double>(tree.terminal_records);
    tree.system.availability = static_cast<double>(ok + denied) / total;
    tree.system.failure_rate = static_cast<double>(failed) / total;
  }
  if (latency_n > 0) {
    tree.system.avg_latency_ms = static_cast<double>(latency_sum) / static_cast<double>(latency_n);
  }
  return tree;
}

std::vector<Anomaly> detect_anomalies(const ThreatProfileTree& tree,
                                      const std::vector<ThreatProfileTree>& baseline, double k) {
  if (baseline.empty()) throw Error(Errc::NoBaseline);
  std::vector<Anomaly> out;
  for (const auto& [principal, client] : tree.clients) {
    for (const auto& [activity, leaf] : client.activities) {
      for (bool denial : {true, false}) {
        std::vector<double> prior;
        for (const auto& b : baseline) prior.push_back(rate(find_leaf(b, principal, activity), denial));
        double mean = 0.0;
        for (double v : prior) mean += v;
        mean /= static_cast<double>(prior.size());
        double var = 0.0;
        for (double v : prior) var += (v - mean) * (v - mean);
        const double sd = std::sqrt(var / static_cast<double>(prior.size()));
        const double current = rate(&leaf, denial);
        bool flagged;
        double score;
        if (sd > 0.0) {
          score = (current - mean) / sd;
          flagged = score > k;
        } else {
          score = current - mean;
          flagged = score > 0.0;
        }
        if (!flagged) continue;
        Anomaly a;
        a.path = principal + "/" + activity;
        a.metric = denial ? "denied_rate" : "failure_rate";
        a.tag.element = element_for(leaf, denial);
        a.tag.threats = stride_map(a.tag.element);
        a.score = score;
        a.value = current;
        a.baseline_mean = mean;
        out.push_back(std::move(a));
      }
    }
  }
  return out;
}

std::string serialize(const ThreatProfileTree& tree, const std::vector<Anomaly>* anomalies) {
  json clients = json::object();
  for (const auto& [principal, c] : tree.clients) {
    json acts = json::object();
    for (const auto& [name, leaf] : c.activities) {
      acts[name] = {{"count", leaf.count},
                    {"ok", leaf.ok},
                    {"denied", leaf.denied},
                    {"failed", leaf.failed},
                    {"reasons", leaf.reasons},
                    {"latency_mean_ms", leaf.latency_mean_ms},
                    {"latency_max_ms", leaf.latency_max_ms}};
    }
    clients[principal] = {{"step_records", c.step_records}, {"activities", std::move(acts)}};
  }
  json j;
  j["root"] = {{"from_ms", tree.window.from_ms},
               {"to_ms", tree.window.to_ms},
               {"log_records", tree.log_records},
               {"terminal_records", tree.terminal_records}};
  j["clients"] = std::move(clients);
  j["system"] = {{"availability", tree.system.availability},
                 {"avg_latency_ms", tree.system.avg_latency_ms},
                 {"failure_rate", tree.system.failure_rate}};
  if (anomalies) {
    json list = json::array();
    for (const auto& a : *anomalies) {
      json threats = json::array();
      for (Threat t : a.tag.threats) threats.push_back(to_string(t));
      list.push_back({{"path", a.path},
                      {"metric", a.metric},
                      {"element", to_string(a.tag.element)},
                      {"threats", std::move(threats)},
                      {"score", a.score},
                      {"value", a.value},
                      {"baseline_mean", a.baseline_mean}});
    }
    j["anomalies"] = std::move(list);
  }
  return j.dump();
}

ThreatProfileTree parse_profile(std::string_view document) {
  try {
    const json j = json::parse(document);
    ThreatProfileTree t;
    const auto& root = j.at("root");
    t.window = {root.at("from_ms").get<std::int64_t>(), root.at("to_ms").get<std::int64_t>()};
    t.log_records = root.at("log_records").get<std::uint64_t>();
    t.terminal_records = root.at("terminal_records").get<std::uint64_t>();
    for (const auto& [principal, c] : j.at("clients").items()) {
      ClientNode node;
      node.principal = principal;
      node.step_records = c.at("step_records").get<std::uint64_t>();
      for (const auto& [name, l] : c.at("activities").items()) {
        LeafStats leaf;
        leaf.count = l.at("count").get<std::uint64_t>();
        leaf.ok = l.at("ok").get<std::uint64_t>();
        leaf.denied = l.at("denied").get<std::uint64_t>();
        leaf.failed = l.at("failed").get<std::uint64_t>();
        leaf.reasons = l.at("reasons").get<std::map<std::string, std::uint64_t>>();
        leaf.latency_mean_ms = l.at("latency_mean_ms").get<double>();
        leaf.latency_max_ms = l.at("latency_max_ms").get<std::int64_t>();
        node.activities[name] = std::move(leaf);
      }
      t.clients[principal] = std::move(node);
    }
    const auto& s = j.at("system");
    t.system = {s.at("availability").get<double>(), s.at("avg_latency_ms").get<double>(),
                s.at("failure_rate").get<double>()};
    return t;
  } catch (const json::exception& e) {
    throw Error(Errc::ProtocolError, e.what());
  }
}

}  // namespace ecig::threatprofile
