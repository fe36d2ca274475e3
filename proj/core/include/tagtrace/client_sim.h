// Seeded browser-population simulator.
//
// Clients visit pages through an InterceptEngine (the relay under test),
// render delivered HTML, and fetch any beacon images they find, going
// through a per-lifetime DNS cache and object cache. A restart clears both
// caches and restores the home page from the browser's own copy, so every
// beacon on it is requested again.
//
// Everything the simulator knows but a relay could not observe (which client
// sent what, lifetimes, restarts) is written to a ground-truth record that
// only tests read.

#ifndef TAGTRACE_CLIENT_SIM_H_
#define TAGTRACE_CLIENT_SIM_H_

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "tagtrace/dns_sim.h"
#include "tagtrace/http_model.h"
#include "tagtrace/injector.h"
#include "tagtrace/proxy_service.h"

namespace tagtrace {

inline constexpr uint64_t kDefaultScenarioSeed = 20090524;

struct UaPopulationEntry {
  std::string raw;
  double weight = 1.0;
  bool vulnerable = false;  // ground truth, never read by analysis

  bool operator==(const UaPopulationEntry&) const = default;
};

struct ScriptedRestart {
  uint32_t client = 0;  // client index
  double at = 0.0;

  bool operator==(const ScriptedRestart&) const = default;
};

using MimeMix = std::vector<std::pair<std::string, double>>;

struct ScenarioConfig {
  uint64_t seed = kDefaultScenarioSeed;
  uint32_t client_count = 0;
  double duration_seconds = 3600.0;
  double visit_rate = 1.0 / 60.0;  // visits per second per online client
  MimeMix mime_mix;                // must sum to 1
  double http_share = 0.96;        // share of visits that are plaintext
  std::vector<UaPopulationEntry> ua_population;

  double non_fetching_share = 0.0;
  // Clients online at t=0; the rest arrive spread evenly over the run.
  double initial_online_share = 1.0;
  double html_without_body_share = 0.0;
  // Client-side DNS cache lifetime; 0 keeps names for the browser lifetime.
  double dns_cache_seconds = 0.0;
  std::vector<ScriptedRestart> restarts;
  uint64_t max_visits = 0;  // 0: unbounded
  // All clients resolve through one shared resolver address.
  bool shared_resolver = false;

  ProxyMode mode = ProxyMode::kActive;
  InjectorConfig injector;
  ZoneConfig zone;
};

absl::Status ValidateScenarioConfig(const ScenarioConfig& config);

// JSON document with the ScenarioConfig field names. Omitted fields keep their
// defaults; "mime_mix" is an object of mime -> share.
absl::StatusOr<ScenarioConfig> ParseScenarioConfig(std::string_view json);
absl::StatusOr<ScenarioConfig> LoadScenarioConfig(const std::string& path);
std::string FormatScenarioConfig(const ScenarioConfig& config);

struct ClientProfile {
  std::string client_id;
  std::string address;  // source address the DNS oracle sees
  std::string user_agent;
  bool ua_vulnerable = false;
  bool fetches_objects = true;
  double uses_https_share = 0.0;
  double online_from = 0.0;
  std::vector<double> restart_schedule;
  std::string home_page;
};

// Mutable browser state for one client.
struct ClientState {
  ClientProfile profile;
  std::map<std::string, double> dns_cache;  // name -> expiry
  std::set<std::string> object_cache;       // beacon URLs fetched
  std::optional<std::string> saved_home_page;
  uint32_t lifetime = 0;

  // Drops both caches and starts a new lifetime.
  void Restart();
};

struct DnsLookup {
  std::string name;
  double at = 0.0;
};

struct BeaconFetch {
  std::string url;
  double at = 0.0;
  bool from_cache = false;  // satisfied locally, no request sent
};

struct ClientReaction {
  std::vector<DnsLookup> dns_queries;
  std::vector<BeaconFetch> fetches;
  std::vector<std::string> beacon_urls;  // every zone image in the page
};

// Image URLs in `html` in document order.
std::vector<std::string> ExtractImageUrls(std::string_view html);

// Renders a delivered page: every image under `zone` is fetched, resolving
// its host first unless the client's DNS cache holds it. Clients that do not
// fetch objects do nothing.
ClientReaction ClientProcessResponse(ClientState& client, std::string_view body,
                                     double now, std::string_view zone,
                                     double dns_cache_seconds = 0.0);

struct ScenarioEvent {
  enum class Kind { kStart, kVisit, kRestart, kBeaconFetch };
  double time = 0.0;
  Kind kind = Kind::kVisit;
  uint32_t client = 0;
  uint64_t exchange_id = 0;  // visits only
  std::string detail;        // url for visits and fetches

  bool operator==(const ScenarioEvent&) const = default;
};

struct LifetimeTruth {
  double start = 0.0;
  double end = 0.0;
  uint32_t tagged_pages_seen = 0;  // delivered or restored pages with beacons

  bool operator==(const LifetimeTruth&) const = default;
};

struct RestartTruth {
  double time = 0.0;
  std::vector<std::string> restored_dynamic_labels;

  bool operator==(const RestartTruth&) const = default;
};

struct ClientTruth {
  std::string client_id;
  std::string address;
  std::string user_agent;
  bool ua_vulnerable = false;
  bool fetches_objects = true;
  std::vector<LifetimeTruth> lifetimes;
  std::vector<RestartTruth> restarts;

  bool operator==(const ClientTruth&) const = default;
};

struct GroundTruth {
  uint64_t seed = 0;
  std::vector<ClientTruth> clients;
  // Plaintext HTML responses with a body element, as generated by the origin.
  uint64_t taggable_pages_generated = 0;
  uint64_t html_pages_generated = 0;
  uint64_t encrypted_visits = 0;

  bool operator==(const GroundTruth&) const = default;
};

absl::Status WriteGroundTruth(const GroundTruth& truth, const std::string& path);
absl::StatusOr<GroundTruth> ReadGroundTruth(const std::string& path);

struct ScenarioOutput {
  std::vector<ClientProfile> clients;
  std::vector<ScenarioEvent> events;
  std::vector<HttpExchange> exchanges;
  std::vector<Tag> tags;
  std::vector<DnsQueryRecord> dns_log;
  std::vector<ObjectFetchRecord> object_log;
  GroundTruth truth;
};

// Builds the client population for `config` (deterministic in the seed).
std::vector<ClientProfile> BuildClients(const ScenarioConfig& config);

// Runs the whole scenario. Deterministic for a fixed config.
absl::StatusOr<ScenarioOutput> RunScenario(const ScenarioConfig& config);

}  // namespace tagtrace

#endif  // TAGTRACE_CLIENT_SIM_H_
