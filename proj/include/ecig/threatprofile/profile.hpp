#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "ecig/core/audit.hpp"

namespace ecig::threatprofile {

enum class Element { ExternalEntity, Process, DataFlow, DataStore };
enum class Threat {
  Spoofing,
  Tampering,
  Repudiation,
  InformationDisclosure,
  DenialOfService,
  ElevationOfPrivilege,
};

constexpr Element kAllElements[] = {Element::ExternalEntity, Element::Process, Element::DataFlow,
                                    Element::DataStore};
constexpr Threat kAllThreats[] = {Threat::Spoofing,        Threat::Tampering,
                                  Threat::Repudiation,     Threat::InformationDisclosure,
                                  Threat::DenialOfService, Threat::ElevationOfPrivilege};

const char* to_string(Element e) noexcept;
const char* to_string(Threat t) noexcept;

// Threats that apply to an element, in the order of kAllThreats.
std::vector<Threat> stride_map(Element element);

struct StrideTag {
  Element element = Element::Process;
  std::vector<Threat> threats;
};

struct LeafStats {
  std::uint64_t count = 0;
  std::uint64_t ok = 0;
  std::uint64_t denied = 0;
  std::uint64_t failed = 0;
  std::map<std::string, std::uint64_t> reasons;  // Denied and Failed reason codes
  double latency_mean_ms = 0.0;
  std::int64_t latency_max_ms = 0;
};

struct ClientNode {
  std::string principal;
  std::uint64_t step_records = 0;  // non-terminal records attributed to this client
  std::map<std::string, LeafStats> activities;
};

struct SystemNode {
  double availability = 1.0;
  double avg_latency_ms = 0.0;
  double failure_rate = 0.0;
};

struct ThreatProfileTree {
  audit::TimeWindow window;
  std::uint64_t log_records = 0;
  std::uint64_t terminal_records = 0;
  std::map<std::string, ClientNode> clients;
  SystemNode system;
};

// Command kinds, i.e. the activity names a terminal record carries.
bool is_command_activity(std::string_view activity) noexcept;
bool is_terminal(const audit::AuditRecord& rec) noexcept;

ThreatProfileTree build_profile(const std::vector<audit::AuditRecord>& logs,
                                const audit::TimeWindow& window);

struct Anomaly {
  std::string path;    // "<principal>/<activity>"
  std::string metric;  // "denied_rate" or "failure_rate"
  StrideTag tag;
  double score = 0.0;  // z-score, or the raw excess when the baseline never varied
  double value = 0.0;
  double baseline_mean = 0.0;
};

// Throws Error(NoBaseline) for an empty baseline.
std::vector<Anomaly> detect_anomalies(const ThreatProfileTree& tree,
                                      const std::vector<ThreatProfileTree>& baseline,
                                      double k = 3.0);

// Stable, key-sorted JSON. Anomalies are included when given.
std::string serialize(const ThreatProfileTree& tree, const std::vector<Anomaly>* anomalies = nullptr);
ThreatProfileTree parse_profile(std::string_view document);  // throws ProtocolError

}  // namespace ecig::threatprofile
