#include "tagtrace/client_sim.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <random>

#include "str_util.h"
#include "jsonl.h"
#include "tagtrace/calibration.h"

namespace tagtrace {

namespace {

using internal::Json;

constexpr double kInfinity = std::numeric_limits<double>::infinity();
constexpr double kRenderDelay = 0.05;
constexpr double kFetchSpacing = 0.002;
constexpr uint32_t kOriginSites = 200;
constexpr uint32_t kHomeSites = 20;

uint64_t Mix64(uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Independent stream per (seed, purpose, index).
std::mt19937_64 DeriveRng(uint64_t seed, uint64_t stream, uint64_t index) {
  return std::mt19937_64(Mix64(Mix64(seed ^ Mix64(stream)) ^ index));
}

double Uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double Exponential(std::mt19937_64& rng, double rate) {
  return -std::log1p(-Uniform(rng)) / rate;
}

bool InUnit(double v) { return v >= 0.0 && v <= 1.0; }

std::string ClientId(uint32_t i) {
  std::string n = std::to_string(i);
  if (n.size() < 4) n.insert(0, 4 - n.size(), '0');
  return internal::Cat("c", n);
}

std::string ClientAddress(uint32_t i) {
  uint32_t v = i + 1;
  return internal::Cat("10.", (v >> 16) & 0xff, ".", (v >> 8) & 0xff, ".",
                      v & 0xff);
}

constexpr std::string_view kSharedResolver = "10.255.255.53";

}  // namespace

// ---------------------------------------------------------------------------
// Config

absl::Status ValidateScenarioConfig(const ScenarioConfig& c) {
  auto bad = [](std::string_view what) {
    return absl::InvalidArgumentError(std::string(what));
  };
  if (!(c.duration_seconds > 0) || !std::isfinite(c.duration_seconds)) {
    return bad("duration_seconds must be positive");
  }
  if (!(c.visit_rate > 0) || !std::isfinite(c.visit_rate)) {
    return bad("visit_rate must be positive");
  }
  if (c.mime_mix.empty()) return bad("mime_mix is empty");
  double sum = 0;
  for (const auto& [mime, share] : c.mime_mix) {
    if (mime.empty()) return bad("mime_mix has an empty type");
    if (!(share >= 0) || !std::isfinite(share)) {
      return bad("mime_mix shares must be non-negative");
    }
    sum += share;
  }
  if (std::abs(sum - 1.0) > 1e-6) {
    return absl::InvalidArgumentError(
        internal::Cat("mime_mix sums to ", sum, ", not 1"));
  }
  if (!InUnit(c.http_share)) return bad("http_share must be in [0,1]");
  if (!InUnit(c.non_fetching_share)) {
    return bad("non_fetching_share must be in [0,1]");
  }
  if (!InUnit(c.initial_online_share)) {
    return bad("initial_online_share must be in [0,1]");
  }
  if (!InUnit(c.html_without_body_share)) {
    return bad("html_without_body_share must be in [0,1]");
  }
  if (!(c.dns_cache_seconds >= 0)) return bad("dns_cache_seconds is negative");
  if (c.ua_population.empty() && c.client_count > 0) {
    return bad("ua_population is empty");
  }
  for (const UaPopulationEntry& e : c.ua_population) {
    if (!(e.weight > 0) || !std::isfinite(e.weight)) {
      return bad("ua_population weights must be positive");
    }
  }
  for (const ScriptedRestart& r : c.restarts) {
    if (r.client >= c.client_count) {
      return absl::InvalidArgumentError(
          internal::Cat("restart names client ", r.client, " of ",
                       c.client_count));
    }
    if (!(r.at >= 0) || r.at > c.duration_seconds) {
      return bad("restart time outside the scenario");
    }
  }
  if (absl::Status s = ValidateInjectorConfig(c.injector); !s.ok()) return s;
  if (absl::Status s = ValidateZoneConfig(c.zone); !s.ok()) return s;
  if (NormalizeDnsName(c.injector.zone) != NormalizeDnsName(c.zone.zone)) {
    return bad("injector zone and DNS zone differ");
  }
  return absl::OkStatus();
}

namespace {

template <typename T>
absl::Status Optional(const Json& j, std::string_view key, T* out,
                      absl::Status (*get)(const Json&, std::string_view, T*)) {
  if (!j.contains(std::string(key))) return absl::OkStatus();
  return get(j, key, out);
}

absl::Status CheckKeys(const Json& j, std::initializer_list<std::string_view> keys,
                       std::string_view where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(keys.begin(), keys.end(), it.key()) == keys.end()) {
      return absl::InvalidArgumentError(
          internal::Cat("unknown key '", it.key(), "' in ", where));
    }
  }
  return absl::OkStatus();
}

absl::Status ParseInto(const Json& j, ScenarioConfig* c) {
  using namespace internal;
  if (absl::Status s = RequireObject(j); !s.ok()) return s;
  if (absl::Status s = CheckKeys(
          j,
          {"seed", "client_count", "duration_seconds", "visit_rate",
           "mime_mix", "http_share", "ua_population", "non_fetching_share",
           "initial_online_share", "html_without_body_share",
           "dns_cache_seconds", "restarts", "max_visits", "shared_resolver",
           "mode", "injector", "zone"},
          "scenario");
      !s.ok()) {
    return s;
  }
  absl::Status s = Optional<uint64_t>(j, "seed", &c->seed, GetUint);
  uint64_t clients = c->client_count;
  if (s.ok()) s = Optional<uint64_t>(j, "client_count", &clients, GetUint);
  if (s.ok() && clients > std::numeric_limits<uint32_t>::max()) {
    s = absl::InvalidArgumentError("client_count too large");
  }
  c->client_count = static_cast<uint32_t>(clients);
  if (s.ok()) s = Optional<double>(j, "duration_seconds", &c->duration_seconds, GetDouble);
  if (s.ok()) s = Optional<double>(j, "visit_rate", &c->visit_rate, GetDouble);
  if (s.ok()) s = Optional<double>(j, "http_share", &c->http_share, GetDouble);
  if (s.ok()) s = Optional<double>(j, "non_fetching_share", &c->non_fetching_share, GetDouble);
  if (s.ok()) s = Optional<double>(j, "initial_online_share", &c->initial_online_share, GetDouble);
  if (s.ok()) s = Optional<double>(j, "html_without_body_share", &c->html_without_body_share, GetDouble);
  if (s.ok()) s = Optional<double>(j, "dns_cache_seconds", &c->dns_cache_seconds, GetDouble);
  if (s.ok()) s = Optional<uint64_t>(j, "max_visits", &c->max_visits, GetUint);
  if (s.ok()) s = Optional<bool>(j, "shared_resolver", &c->shared_resolver, GetBool);
  if (!s.ok()) return s;

  if (j.contains("mode")) {
    std::string mode;
    if (s = GetString(j, "mode", &mode); !s.ok()) return s;
    absl::StatusOr<ProxyMode> m = ParseProxyMode(mode);
    if (!m.ok()) return m.status();
    c->mode = *m;
  }

  if (j.contains("mime_mix")) {
    const Json& mix = j["mime_mix"];
    if (mix.is_string() && mix.get<std::string>() == "reference") {
      c->mime_mix = ReferenceMimeMix();
    } else if (mix.is_object()) {
      c->mime_mix.clear();
      for (auto it = mix.begin(); it != mix.end(); ++it) {
        if (!it.value().is_number()) {
          return absl::InvalidArgumentError(
              internal::Cat("mime_mix share for '", it.key(), "' is not a number"));
        }
        c->mime_mix.emplace_back(it.key(), it.value().get<double>());
      }
    } else {
      return absl::InvalidArgumentError(
          "mime_mix must be an object or \"reference\"");
    }
  }

  if (j.contains("ua_population")) {
    const Json& pop = j["ua_population"];
    if (pop.is_string() && pop.get<std::string>() == "calibrated") {
      c->ua_population = CalibratedUaPopulation(c->client_count, c->seed);
    } else if (pop.is_array()) {
      c->ua_population.clear();
      for (const Json& e : pop) {
        UaPopulationEntry entry;
        if (e.is_string()) {
          entry.raw = e.get<std::string>();
        } else {
          if (s = CheckKeys(e, {"raw", "weight", "vulnerable"}, "ua_population");
              !s.ok()) {
            return s;
          }
          s = GetString(e, "raw", &entry.raw);
          if (s.ok()) s = Optional<double>(e, "weight", &entry.weight, GetDouble);
          if (s.ok()) s = Optional<bool>(e, "vulnerable", &entry.vulnerable, GetBool);
          if (!s.ok()) return s;
        }
        c->ua_population.push_back(std::move(entry));
      }
    } else {
      return absl::InvalidArgumentError(
          "ua_population must be an array or \"calibrated\"");
    }
  }

  if (j.contains("restarts")) {
    const Json& rs = j["restarts"];
    if (!rs.is_array()) {
      return absl::InvalidArgumentError("restarts must be an array");
    }
    c->restarts.clear();
    for (const Json& r : rs) {
      uint64_t client = 0;
      ScriptedRestart restart;
      s = RequireObject(r);
      if (s.ok()) s = GetUint(r, "client", &client);
      if (s.ok()) s = GetDouble(r, "at", &restart.at);
      if (!s.ok()) return s;
      restart.client = static_cast<uint32_t>(
          std::min<uint64_t>(client, std::numeric_limits<uint32_t>::max()));
      c->restarts.push_back(restart);
    }
  }

  if (j.contains("injector")) {
    const Json& inj = j["injector"];
    if (s = RequireObject(inj); !s.ok()) return s;
    if (s = CheckKeys(inj, {"zone", "static_label", "object_name", "seed"},
                      "injector");
        !s.ok()) {
      return s;
    }
    s = Optional<std::string>(inj, "zone", &c->injector.zone, GetString);
    if (s.ok()) s = Optional<std::string>(inj, "static_label", &c->injector.static_label, GetString);
    if (s.ok()) s = Optional<std::string>(inj, "object_name", &c->injector.object_name, GetString);
    if (s.ok()) s = Optional<uint64_t>(inj, "seed", &c->injector.seed, GetUint);
    if (!s.ok()) return s;
    // The DNS zone follows the injector unless given separately.
    c->zone.zone = c->injector.zone;
  }
  if (j.contains("zone")) {
    const Json& z = j["zone"];
    if (s = RequireObject(z); !s.ok()) return s;
    if (s = CheckKeys(z, {"zone", "payload_address", "ttl_seconds"}, "zone");
        !s.ok()) {
      return s;
    }
    uint64_t ttl = c->zone.ttl_seconds;
    s = Optional<std::string>(z, "zone", &c->zone.zone, GetString);
    if (s.ok()) s = Optional<std::string>(z, "payload_address", &c->zone.payload_address, GetString);
    if (s.ok()) s = Optional<uint64_t>(z, "ttl_seconds", &ttl, GetUint);
    if (!s.ok()) return s;
    c->zone.ttl_seconds = static_cast<uint32_t>(ttl);
  }
  return absl::OkStatus();
}

}  // namespace

absl::StatusOr<ScenarioConfig> ParseScenarioConfig(std::string_view json) {
  Json j = Json::parse(json.begin(), json.end(), nullptr, false);
  if (j.is_discarded()) {
    return absl::InvalidArgumentError("scenario config is not valid JSON");
  }
  ScenarioConfig config;
  if (absl::Status s = ParseInto(j, &config); !s.ok()) return s;
  if (absl::Status s = ValidateScenarioConfig(config); !s.ok()) return s;
  return config;
}

absl::StatusOr<ScenarioConfig> LoadScenarioConfig(const std::string& path) {
  std::string text;
  if (absl::Status s = internal::ReadWholeFile(path, &text); !s.ok()) return s;
  absl::StatusOr<ScenarioConfig> c = ParseScenarioConfig(text);
  if (!c.ok()) {
    return absl::Status(c.status().code(),
                        internal::Cat(path, ": ", c.status().message()));
  }
  return c;
}

std::string FormatScenarioConfig(const ScenarioConfig& c) {
  Json j = Json::object();
  j["seed"] = c.seed;
  j["client_count"] = c.client_count;
  j["duration_seconds"] = c.duration_seconds;
  j["visit_rate"] = c.visit_rate;
  Json mix = Json::object();
  for (const auto& [mime, share] : c.mime_mix) mix[mime] = share;
  j["mime_mix"] = mix;
  j["http_share"] = c.http_share;
  Json pop = Json::array();
  for (const UaPopulationEntry& e : c.ua_population) {
    pop.push_back({{"raw", e.raw}, {"weight", e.weight}, {"vulnerable", e.vulnerable}});
  }
  j["ua_population"] = pop;
  j["non_fetching_share"] = c.non_fetching_share;
  j["initial_online_share"] = c.initial_online_share;
  j["html_without_body_share"] = c.html_without_body_share;
  j["dns_cache_seconds"] = c.dns_cache_seconds;
  Json restarts = Json::array();
  for (const ScriptedRestart& r : c.restarts) {
    restarts.push_back({{"client", r.client}, {"at", r.at}});
  }
  j["restarts"] = restarts;
  j["max_visits"] = c.max_visits;
  j["shared_resolver"] = c.shared_resolver;
  j["mode"] = ProxyModeName(c.mode);
  j["injector"] = {{"zone", c.injector.zone},
                   {"static_label", c.injector.static_label},
                   {"object_name", c.injector.object_name},
                   {"seed", c.injector.seed}};
  j["zone"] = {{"zone", c.zone.zone},
               {"payload_address", c.zone.payload_address},
               {"ttl_seconds", c.zone.ttl_seconds}};
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Client behaviour

void ClientState::Restart() {
  dns_cache.clear();
  object_cache.clear();
  ++lifetime;
}

std::vector<std::string> ExtractImageUrls(std::string_view html) {
  std::vector<std::string> out;
  std::string lower = ToLowerAscii(html);
  for (size_t pos = lower.find("<img"); pos != std::string::npos;
       pos = lower.find("<img", pos + 4)) {
    size_t end = lower.find('>', pos);
    if (end == std::string::npos) break;
    std::string_view tag = std::string_view(lower).substr(pos, end - pos);
    size_t src = tag.find("src=");
    while (src != std::string_view::npos && src > 0 &&
           tag[src - 1] != ' ' && tag[src - 1] != '\t' && tag[src - 1] != '\n') {
      src = tag.find("src=", src + 4);
    }
    if (src == std::string_view::npos) continue;
    size_t v = pos + src + 4;  // offset into the original text
    std::string url;
    if (html[v] == '"' || html[v] == '\'') {
      char q = html[v];
      size_t close = html.find(q, v + 1);
      if (close == std::string_view::npos || close > end) continue;
      url = std::string(html.substr(v + 1, close - v - 1));
    } else {
      size_t close = html.find_first_of(" \t\r\n>", v);
      url = std::string(html.substr(v, close - v));
    }
    if (!url.empty()) out.push_back(std::move(url));
  }
  return out;
}

ClientReaction ClientProcessResponse(ClientState& client, std::string_view body,
                                     double now, std::string_view zone,
                                     double dns_cache_seconds) {
  ClientReaction reaction;
  std::string z = NormalizeDnsName(zone);
  double at = now;
  for (std::string& url : ExtractImageUrls(body)) {
    std::string host = UrlHost(url);
    if (!IsInZone(host, z)) continue;
    reaction.beacon_urls.push_back(url);
    if (!client.profile.fetches_objects) continue;
    at += kFetchSpacing;
    if (client.object_cache.contains(url)) {
      reaction.fetches.push_back({url, at, true});
      continue;
    }
    auto cached = client.dns_cache.find(host);
    if (cached == client.dns_cache.end() || cached->second <= at) {
      reaction.dns_queries.push_back({host, at});
      client.dns_cache[host] =
          dns_cache_seconds > 0 ? at + dns_cache_seconds : kInfinity;
    }
    client.object_cache.insert(url);
    reaction.fetches.push_back({std::move(url), at, false});
  }
  return reaction;
}

// ---------------------------------------------------------------------------
// Ground truth

absl::Status WriteGroundTruth(const GroundTruth& truth, const std::string& path) {
  Json j = Json::object();
  j["seed"] = truth.seed;
  j["taggable_pages_generated"] = truth.taggable_pages_generated;
  j["html_pages_generated"] = truth.html_pages_generated;
  j["encrypted_visits"] = truth.encrypted_visits;
  Json clients = Json::array();
  for (const ClientTruth& c : truth.clients) {
    Json lifetimes = Json::array();
    for (const LifetimeTruth& l : c.lifetimes) {
      lifetimes.push_back({{"start", l.start},
                           {"end", l.end},
                           {"tagged_pages_seen", l.tagged_pages_seen}});
    }
    Json restarts = Json::array();
    for (const RestartTruth& r : c.restarts) {
      restarts.push_back({{"time", r.time},
                          {"restored_dynamic_labels", r.restored_dynamic_labels}});
    }
    clients.push_back({{"client_id", c.client_id},
                       {"address", c.address},
                       {"user_agent", c.user_agent},
                       {"ua_vulnerable", c.ua_vulnerable},
                       {"fetches_objects", c.fetches_objects},
                       {"lifetimes", lifetimes},
                       {"restarts", restarts}});
  }
  j["clients"] = clients;
  return internal::WriteWholeFile(path, j.dump(1) + "\n");
}

absl::StatusOr<GroundTruth> ReadGroundTruth(const std::string& path) {
  std::string text;
  if (absl::Status s = internal::ReadWholeFile(path, &text); !s.ok()) return s;
  try {
    Json j = Json::parse(text);
    GroundTruth t;
    t.seed = j.at("seed").get<uint64_t>();
    t.taggable_pages_generated = j.at("taggable_pages_generated").get<uint64_t>();
    t.html_pages_generated = j.at("html_pages_generated").get<uint64_t>();
    t.encrypted_visits = j.at("encrypted_visits").get<uint64_t>();
    for (const Json& c : j.at("clients")) {
      ClientTruth ct;
      ct.client_id = c.at("client_id").get<std::string>();
      ct.address = c.at("address").get<std::string>();
      ct.user_agent = c.at("user_agent").get<std::string>();
      ct.ua_vulnerable = c.at("ua_vulnerable").get<bool>();
      ct.fetches_objects = c.at("fetches_objects").get<bool>();
      for (const Json& l : c.at("lifetimes")) {
        ct.lifetimes.push_back({l.at("start").get<double>(),
                                l.at("end").get<double>(),
                                l.at("tagged_pages_seen").get<uint32_t>()});
      }
      for (const Json& r : c.at("restarts")) {
        ct.restarts.push_back(
            {r.at("time").get<double>(),
             r.at("restored_dynamic_labels").get<std::vector<std::string>>()});
      }
      t.clients.push_back(std::move(ct));
    }
    return t;
  } catch (const Json::exception& e) {
    return absl::InvalidArgumentError(internal::Cat(path, ": ", e.what()));
  }
}

// ---------------------------------------------------------------------------
// Population

std::vector<ClientProfile> BuildClients(const ScenarioConfig& config) {
  const uint32_t n = config.client_count;
  std::vector<ClientProfile> clients(n);

  // Systematic sampling over the cumulative UA weights.
  std::vector<double> cumulative;
  double total = 0;
  for (const UaPopulationEntry& e : config.ua_population) {
    total += e.weight;
    cumulative.push_back(total);
  }
  std::mt19937_64 pop_rng = DeriveRng(config.seed, 1, 0);
  const double offset = Uniform(pop_rng);

  const uint64_t non_fetching_ppm =
      static_cast<uint64_t>(std::llround(config.non_fetching_share * 1e6));
  const uint32_t initially_online = static_cast<uint32_t>(
      std::floor(config.initial_online_share * n + 1e-9));
  const uint32_t arriving = n - initially_online;

  for (uint32_t i = 0; i < n; ++i) {
    ClientProfile& p = clients[i];
    p.client_id = ClientId(i);
    p.address = ClientAddress(i);
    if (!cumulative.empty()) {
      double at = (i + offset) / n * total;
      size_t k = std::upper_bound(cumulative.begin(), cumulative.end(), at) -
                 cumulative.begin();
      k = std::min(k, cumulative.size() - 1);
      p.user_agent = config.ua_population[k].raw;
      p.ua_vulnerable = config.ua_population[k].vulnerable;
    }
    // Client i skips objects when its cumulative quota ticks over.
    p.fetches_objects = ((uint64_t{i} + 1) * non_fetching_ppm) / 1000000 ==
                        (uint64_t{i} * non_fetching_ppm) / 1000000;
    p.uses_https_share = 1.0 - config.http_share;
    if (i >= initially_online) {
      std::mt19937_64 rng = DeriveRng(config.seed, 2, i);
      uint32_t j = i - initially_online;
      p.online_from = config.duration_seconds * (j + Uniform(rng)) / arriving;
    }
    p.home_page = internal::Cat("http://home", i % kHomeSites, ".example/");
  }
  for (const ScriptedRestart& r : config.restarts) {
    if (r.client < n) clients[r.client].restart_schedule.push_back(r.at);
  }
  for (ClientProfile& p : clients) {
    std::sort(p.restart_schedule.begin(), p.restart_schedule.end());
  }
  return clients;
}

// ---------------------------------------------------------------------------
// Scenario run

namespace {

struct Pending {
  double time;
  uint64_t seq;
  uint32_t client;
  ScenarioEvent::Kind kind;

  bool operator>(const Pending& o) const {
    return time != o.time ? time > o.time : seq > o.seq;
  }
};

struct Page {
  std::string content_type;
  std::string body;
  bool html = false;
  bool has_body = false;
};

std::string FullHtml(std::string_view title, std::string_view site,
                     uint64_t n) {
  return internal::Cat(
      "<!DOCTYPE html>\n<html><head><title>", title,
      "</title></head>\n<body>\n<h1>", title, "</h1>\n<p>Article ", n,
      " on ", site, ".</p>\n<img src=\"http://", site,
      "/logo.png\" alt=\"logo\">\n</body>\n</html>\n");
}

class Runner {
 public:
  explicit Runner(const ScenarioConfig& config)
      : config_(config),
        zone_(config.zone),
        engine_(config.mode, config.injector,
                ExchangeSinks{
                    [this](const HttpExchange& e) { out_.exchanges.push_back(e); },
                    [this](const Tag& t) { out_.tags.push_back(t); }}) {
    double cum = 0;
    for (const auto& [mime, share] : config_.mime_mix) {
      cum += share;
      mime_cumulative_.push_back(cum);
    }
  }

  ScenarioOutput Run() {
    out_.clients = BuildClients(config_);
    out_.truth.seed = config_.seed;
    for (uint32_t i = 0; i < out_.clients.size(); ++i) {
      const ClientProfile& p = out_.clients[i];
      states_.push_back(ClientState{p, {}, {}, std::nullopt, 0});
      rngs_.push_back(DeriveRng(config_.seed, 3, i));
      ClientTruth t;
      t.client_id = p.client_id;
      t.address = p.address;
      t.user_agent = p.user_agent;
      t.ua_vulnerable = p.ua_vulnerable;
      t.fetches_objects = p.fetches_objects;
      out_.truth.clients.push_back(std::move(t));
      Push(p.online_from, i, ScenarioEvent::Kind::kStart);
      for (double at : p.restart_schedule) {
        if (at >= p.online_from) Push(at, i, ScenarioEvent::Kind::kRestart);
      }
    }

    while (!queue_.empty() && !exhausted_) {
      Pending ev = queue_.top();
      queue_.pop();
      if (ev.time >= config_.duration_seconds) break;
      switch (ev.kind) {
        case ScenarioEvent::Kind::kStart:
          Start(ev.client, ev.time);
          break;
        case ScenarioEvent::Kind::kVisit:
          Browse(ev.client, ev.time);
          break;
        case ScenarioEvent::Kind::kRestart:
          Restart(ev.client, ev.time);
          break;
        case ScenarioEvent::Kind::kBeaconFetch:
          break;
      }
    }

    double end = config_.duration_seconds;
    for (ClientTruth& t : out_.truth.clients) {
      if (!t.lifetimes.empty()) t.lifetimes.back().end = end;
    }
    out_.dns_log = zone_.Log();
    return std::move(out_);
  }

 private:
  void Push(double time, uint32_t client, ScenarioEvent::Kind kind) {
    queue_.push({time, next_seq_++, client, kind});
  }

  void ScheduleNextVisit(uint32_t c, double now) {
    Push(now + Exponential(rngs_[c], config_.visit_rate), c,
         ScenarioEvent::Kind::kVisit);
  }

  void Start(uint32_t c, double t) {
    out_.events.push_back({t, ScenarioEvent::Kind::kStart, c, 0, {}});
    out_.truth.clients[c].lifetimes.push_back({t, t, 0});
    VisitHome(c, t);
    ScheduleNextVisit(c, t);
  }

  void Restart(uint32_t c, double t) {
    ClientState& s = states_[c];
    ClientTruth& truth = out_.truth.clients[c];
    if (truth.lifetimes.empty()) return;  // never came online
    out_.events.push_back({t, ScenarioEvent::Kind::kRestart, c, 0, {}});
    truth.lifetimes.back().end = t;
    truth.lifetimes.push_back({t, t, 0});
    s.Restart();
    RestartTruth restart{t, {}};
    if (s.saved_home_page) {
      // Session restore: the page comes from the browser, not the network.
      std::string page = *s.saved_home_page;
      std::vector<std::string> beacons = Render(c, page, t);
      for (const std::string& url : beacons) {
        std::optional<std::string> label =
            LabelUnderZone(UrlHost(url), config_.injector.zone);
        if (label && *label != ToLowerAscii(config_.injector.static_label)) {
          restart.restored_dynamic_labels.push_back(*label);
        }
      }
    } else {
      VisitHome(c, t);
    }
    truth.restarts.push_back(std::move(restart));
  }

  void VisitHome(uint32_t c, double t) {
    const std::string& url = states_[c].profile.home_page;
    Page page;
    page.content_type = "text/html; charset=utf-8";
    page.body = FullHtml(internal::Cat("Home of ", UrlHost(url)), UrlHost(url),
                         states_[c].lifetime);
    page.html = true;
    page.has_body = true;
    std::optional<std::string> delivered = Exchange(c, t, url, page, false);
    if (delivered) states_[c].saved_home_page = std::move(*delivered);
  }

  void Browse(uint32_t c, double t) {
    std::mt19937_64& rng = rngs_[c];
    uint32_t site = static_cast<uint32_t>(rng() % kOriginSites);
    std::string host = internal::Cat("site", site, ".example");
    if (Uniform(rng) >= config_.http_share) {
      Exchange(c, t, internal::Cat("https://", host, ":443"), Page{}, true);
    } else {
      uint64_t n = ++page_counter_;
      double u = Uniform(rng);
      size_t k = std::upper_bound(mime_cumulative_.begin(),
                                  mime_cumulative_.end(), u) -
                 mime_cumulative_.begin();
      k = std::min(k, mime_cumulative_.size() - 1);
      const std::string& mime = config_.mime_mix[k].first;
      Page page;
      std::string url = internal::Cat("http://", host, "/r/", n);
      if (mime == "text/html") {
        page.html = true;
        page.content_type = "text/html; charset=utf-8";
        if (Uniform(rng) < config_.html_without_body_share) {
          page.body = internal::Cat("<div class=\"fragment\"><p>Update ", n,
                                   "</p></div>\n");
        } else {
          page.has_body = true;
          page.body = FullHtml(internal::Cat("Story ", n), host, n);
        }
      } else {
        page.content_type = mime;
        page.body = internal::Cat("placeholder ", mime, " ", n, "\n");
      }
      Exchange(c, t, url, page, false);
    }
    ScheduleNextVisit(c, t);
  }

  // Sends one exchange through the relay and renders what comes back.
  // Returns the delivered body of an HTML page.
  std::optional<std::string> Exchange(uint32_t c, double t,
                                      const std::string& url, const Page& page,
                                      bool encrypted) {
    if (config_.max_visits != 0 && visits_ >= config_.max_visits) {
      exhausted_ = true;
      return std::nullopt;
    }
    ++visits_;
    const ClientProfile& p = states_[c].profile;
    HttpExchange e;
    e.exchange_id = engine_.NextExchangeId();
    e.timestamp = t;
    e.flow_id = internal::Cat("flow-", e.exchange_id);
    e.ground_truth_client = p.client_id;
    if (encrypted) {
      ++out_.truth.encrypted_visits;
      e.method = "CONNECT";
      e.url = url;
      e.is_encrypted = true;
      e.response_status = 200;
    } else {
      e.url = url;
      e.request_headers.push_back({"Host", UrlHost(url)});
      if (!p.user_agent.empty()) {
        e.request_headers.push_back({"User-Agent", p.user_agent});
      }
      e.request_headers.push_back({"Accept", "*/*"});
      e.response_headers.push_back({"Server", "origin-sim"});
      e.response_headers.push_back({"Content-Type", page.content_type});
      e.response_headers.push_back(
          {"Content-Length", std::to_string(page.body.size())});
      e.response_body = page.body;
      if (page.html) ++out_.truth.html_pages_generated;
      if (page.html && page.has_body) ++out_.truth.taggable_pages_generated;
    }
    InterceptEngine::Delivery d = engine_.Process(e);
    out_.events.push_back(
        {t, ScenarioEvent::Kind::kVisit, c, e.exchange_id, url});
    if (encrypted || !page.html) return std::nullopt;
    Render(c, d.exchange.response_body, t);
    return std::move(d.exchange.response_body);
  }

  // Processes a page in the browser; returns the beacon URLs it carried.
  std::vector<std::string> Render(uint32_t c, std::string_view body, double t) {
    ClientState& s = states_[c];
    ClientReaction r = ClientProcessResponse(s, body, t + kRenderDelay,
                                             config_.injector.zone,
                                             config_.dns_cache_seconds);
    if (!r.beacon_urls.empty()) {
      ++out_.truth.clients[c].lifetimes.back().tagged_pages_seen;
    }
    const std::string source = config_.shared_resolver
                                   ? std::string(kSharedResolver)
                                   : s.profile.address;
    for (const DnsLookup& q : r.dns_queries) zone_.Resolve(q.name, source, q.at);
    for (const BeaconFetch& f : r.fetches) {
      if (f.from_cache) continue;
      out_.object_log.push_back({f.at, s.profile.address, f.url});
      out_.events.push_back(
          {f.at, ScenarioEvent::Kind::kBeaconFetch, c, 0, f.url});
    }
    return std::move(r.beacon_urls);
  }

  const ScenarioConfig& config_;
  WildcardZone zone_;
  ScenarioOutput out_;
  InterceptEngine engine_;
  std::vector<double> mime_cumulative_;
  std::vector<ClientState> states_;
  std::vector<std::mt19937_64> rngs_;
  std::priority_queue<Pending, std::vector<Pending>, std::greater<Pending>>
      queue_;
  uint64_t next_seq_ = 0;
  uint64_t visits_ = 0;
  uint64_t page_counter_ = 0;
  bool exhausted_ = false;
};

}  // namespace

absl::StatusOr<ScenarioOutput> RunScenario(const ScenarioConfig& config) {
  if (absl::Status s = ValidateScenarioConfig(config); !s.ok()) return s;
  Runner runner(config);
  return runner.Run();
}

}  // namespace tagtrace
