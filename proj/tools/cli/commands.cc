#include "commands.h"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "tagtrace/calibration.h"
#include "tagtrace/client_sim.h"
#include "tagtrace/correlator.h"
#include "tagtrace/dns_server.h"
#include "tagtrace/exchange_log.h"
#include "tagtrace/injector.h"
#include "tagtrace/ua_vuln.h"
#include "tagtrace/version.h"

namespace tagtrace::cli {

namespace {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

std::string Msg(const absl::Status& s) {
  return std::string(s.message().data(), s.message().size());
}

absl::Status Prefixed(std::string_view what, const absl::Status& s) {
  return absl::Status(s.code(), std::string(what) + ": " + Msg(s));
}

absl::Status EnsureDir(const std::string& dir) {
  if (dir.empty()) return absl::InvalidArgumentError("no output directory");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    return absl::InternalError("cannot create " + dir + ": " + ec.message());
  }
  return absl::OkStatus();
}

absl::Status WriteText(const fs::path& path, std::string_view text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) return absl::InternalError("cannot write " + path.string());
  f << text;
  f.close();
  if (!f) return absl::InternalError("write failed: " + path.string());
  return absl::OkStatus();
}

absl::StatusOr<std::string> ReadText(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) return absl::NotFoundError("cannot read " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::string UtcNow() {
  std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream ss;
  ss << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return ss.str();
}

struct Manifest {
  std::string subcommand;
  std::vector<std::string> config_paths;
  std::optional<uint64_t> seed;
  std::string out_dir;
  std::vector<std::string> outputs;
};

// The only wall-clock field is "created_at".
absl::Status WriteManifest(const Manifest& m) {
  Json j = Json::object();
  j["subcommand"] = m.subcommand;
  j["config_paths"] = m.config_paths;
  j["seed"] = m.seed ? Json(*m.seed) : Json(nullptr);
  j["out_dir"] = m.out_dir;
  j["outputs"] = m.outputs;
  j["components"] = {
      {"tagtrace", std::string(kVersion)},
      {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                            std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                            std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
      {"cli11", CLI11_VERSION}};
  j["created_at"] = UtcNow();
  return WriteText(fs::path(m.out_dir) / "manifest.json", j.dump(2) + "\n");
}

std::string Fixed(double v, int digits) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(digits) << v;
  return ss.str();
}

}  // namespace

absl::Status Simulate(const SimulateOptions& opts, std::ostream& out) {
  ScenarioConfig config;
  if (opts.config_path.empty()) {
    config = ReferenceScenario();
  } else {
    absl::StatusOr<ScenarioConfig> c = LoadScenarioConfig(opts.config_path);
    if (!c.ok()) return c.status();
    config = *std::move(c);
  }
  if (opts.seed) config.seed = *opts.seed;
  if (opts.clients) config.client_count = *opts.clients;
  if (opts.duration) config.duration_seconds = *opts.duration;
  if (opts.mode) config.mode = *opts.mode;
  if (opts.zone) {
    config.injector.zone = *opts.zone;
    config.zone.zone = *opts.zone;
  }
  if (opts.config_path.empty() && (opts.seed || opts.clients)) {
    config.ua_population =
        CalibratedUaPopulation(config.client_count, config.seed);
  }
  if (absl::Status s = ValidateScenarioConfig(config); !s.ok()) {
    return Prefixed("invalid scenario", s);
  }
  absl::StatusOr<ScenarioOutput> run = RunScenario(config);
  if (!run.ok()) return run.status();

  if (absl::Status s = EnsureDir(opts.out_dir); !s.ok()) return s;
  const fs::path dir(opts.out_dir);
  auto path = [&](const char* name) { return (dir / name).string(); };
  absl::Status s = WriteExchangeLog(run->exchanges, path("exchanges.jsonl"));
  if (s.ok()) s = WriteTagLog(run->tags, path("tags.jsonl"));
  if (s.ok()) s = WriteDnsLog(run->dns_log, path("dns.jsonl"));
  if (s.ok()) s = WriteObjectLog(run->object_log, path("objects.jsonl"));
  if (s.ok()) s = WriteGroundTruth(run->truth, path("ground_truth.json"));
  if (s.ok()) s = WriteText(dir / "vulndb.csv", FormatVulnDb(CalibratedVulnDb()));
  if (s.ok()) s = WriteText(dir / "scenario.json", FormatScenarioConfig(config));
  if (!s.ok()) return s;

  Manifest m{"simulate",
             opts.config_path.empty() ? std::vector<std::string>{}
                                      : std::vector<std::string>{opts.config_path},
             config.seed,
             opts.out_dir,
             {"exchanges.jsonl", "tags.jsonl", "dns.jsonl", "objects.jsonl",
              "ground_truth.json", "vulndb.csv", "scenario.json"}};
  if (s = WriteManifest(m); !s.ok()) return s;

  out << "simulated " << config.client_count << " clients over "
      << config.duration_seconds << " s (seed " << config.seed << ", "
      << ProxyModeName(config.mode) << "): " << run->exchanges.size()
      << " exchanges, " << run->tags.size() << " tags, " << run->dns_log.size()
      << " DNS queries\n";
  return absl::OkStatus();
}

absl::Status Analyze(const AnalyzeOptions& opts, std::ostream& out) {
  const fs::path logs(opts.log_dir);
  for (const char* name : {"exchanges.jsonl", "tags.jsonl", "dns.jsonl"}) {
    if (!fs::exists(logs / name)) {
      return absl::NotFoundError("missing log " + (logs / name).string());
    }
  }
  auto exchanges = ReadExchangeLog((logs / "exchanges.jsonl").string());
  if (!exchanges.ok()) return exchanges.status();
  auto tags = ReadTagLog((logs / "tags.jsonl").string());
  if (!tags.ok()) return tags.status();
  auto dns = ReadDnsLog((logs / "dns.jsonl").string());
  if (!dns.ok()) return dns.status();

  std::string db_path = opts.vulndb_path.empty()
                            ? (logs / "vulndb.csv").string()
                            : opts.vulndb_path;
  if (!fs::exists(db_path)) {
    return absl::NotFoundError("missing vulnerability database " + db_path);
  }
  absl::StatusOr<VulnDb> db = LoadVulnDb(db_path);
  if (!db.ok()) return db.status();

  CorrelationOptions copts;
  copts.window_seconds = opts.window_seconds;
  if (opts.zone || opts.static_label) {
    BeaconNames names =
        DeriveBeaconNames(*tags).value_or(BeaconNames{"beacon.test", "static"});
    if (opts.zone) names.zone = *opts.zone;
    if (opts.static_label) names.static_label = *opts.static_label;
    copts.names = names;
  }
  absl::StatusOr<CorrelationReport> report =
      BuildReport(*exchanges, *tags, *dns, *db, copts);
  if (!report.ok()) return report.status();
  if (absl::Status s = WriteReport(*report, opts.out_dir); !s.ok()) return s;
  Manifest m{"analyze",
             {db_path},
             std::nullopt,
             opts.out_dir,
             {"report.json", "ratio_series.csv", "ua_growth.csv",
              "mime_distribution.csv"}};
  if (absl::Status s = WriteManifest(m); !s.ok()) return s;

  out << "unique users " << report->unique_users << ", reappearances "
      << report->reappearances.size() << ", user agents "
      << report->unique_user_agents;
  if (report->vulnerability_ratio) {
    out << ", vulnerability ratio " << Fixed(*report->vulnerability_ratio, 4);
  }
  out << "\n";
  return absl::OkStatus();
}

absl::Status Inject(const InjectOptions& opts, std::ostream& out) {
  InjectorConfig config;
  if (opts.seed) config.seed = *opts.seed;
  if (opts.zone) config.zone = *opts.zone;
  if (opts.static_label) config.static_label = *opts.static_label;
  if (absl::Status s = ValidateInjectorConfig(config); !s.ok()) return s;
  auto exchanges = ReadExchangeLog(opts.in_path);
  if (!exchanges.ok()) return exchanges.status();

  Injector injector(config);
  std::vector<HttpExchange> rewritten;
  std::vector<Tag> tags;
  rewritten.reserve(exchanges->size());
  for (const HttpExchange& e : *exchanges) {
    Injector::Result r = injector.Inject(e);
    rewritten.push_back(std::move(r.exchange));
    for (Tag& t : r.tags) tags.push_back(std::move(t));
  }
  if (absl::Status s = WriteExchangeLog(rewritten, opts.out_path); !s.ok()) {
    return s;
  }
  if (!opts.tag_log_path.empty()) {
    if (absl::Status s = WriteTagLog(tags, opts.tag_log_path); !s.ok()) return s;
  }
  out << "rewrote " << rewritten.size() << " exchanges, issued " << tags.size()
      << " tags\n";
  return absl::OkStatus();
}

absl::Status ClassifyUa(const ClassifyOptions& opts, std::ostream& out) {
  VulnDb db;
  if (opts.vulndb_path.empty()) {
    db = CalibratedVulnDb();
  } else {
    absl::StatusOr<VulnDb> loaded = LoadVulnDb(opts.vulndb_path);
    if (!loaded.ok()) return loaded.status();
    db = *std::move(loaded);
  }
  std::vector<std::string> agents = opts.agents;
  if (!opts.in_path.empty()) {
    absl::StatusOr<std::string> text = ReadText(opts.in_path);
    if (!text.ok()) return text.status();
    std::istringstream lines(*text);
    std::string line;
    while (std::getline(lines, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      agents.push_back(line);
    }
  }
  out << "verdict,reason,user_agent\n";
  for (const std::string& ua : agents) {
    UaClassification c = Classify(ua, db);
    std::string quoted = ua;
    size_t pos = 0;
    while ((pos = quoted.find('"', pos)) != std::string::npos) {
      quoted.insert(pos, 1, '"');
      pos += 2;
    }
    out << VerdictName(c.verdict) << "," << ReasonName(c.reason) << ",\""
        << quoted << "\"\n";
  }
  return absl::OkStatus();
}

absl::Status Report(const ReportOptions& opts, std::ostream& out) {
  const fs::path dir(opts.analysis_dir);
  absl::StatusOr<std::string> text = ReadText(dir / "report.json");
  if (!text.ok()) return text.status();
  Json j = Json::parse(*text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    return absl::InvalidArgumentError((dir / "report.json").string() +
                                      " is not a report");
  }
  std::ostringstream r;
  try {
    r << "zone " << j.at("zone").get<std::string>() << " (static name "
      << j.at("static_name").get<std::string>() << ")\n";
    r << "exchanges " << j.at("exchanges").get<uint64_t>() << ", encrypted "
      << j.at("encrypted_exchanges").get<uint64_t>() << "\n";
    r << "unique users (static-name queries) "
      << j.at("unique_users").get<uint64_t>() << "\n";
    const Json& t = j.at("tags");
    r << "tags issued: static " << t.at("static_issued").get<uint64_t>()
      << ", dynamic " << t.at("dynamic_issued").get<uint64_t>()
      << "; dynamic labels resolved " << t.at("dynamic_labels_hit").get<uint64_t>()
      << "\n";
    r << "reappearing dynamic tags " << j.at("reappearances").size() << "\n";
    r << "anomalies " << j.at("anomalies").size() << "\n";
    const Json& ua = j.at("user_agents");
    r << "user agents: unique " << ua.at("unique").get<uint64_t>()
      << ", vulnerable " << ua.at("vulnerable").get<uint64_t>() << ", ratio ";
    if (ua.at("ratio").is_null()) {
      r << "n/a";
    } else {
      r << Fixed(ua.at("ratio").get<double>(), 4);
    }
    r << "\n";
    const Json& mime = j.at("mime_distribution");
    r << "content types (" << mime.at("total").get<uint64_t>()
      << " plaintext responses):\n";
    std::vector<std::pair<std::string, double>> rows;
    for (auto it = mime.at("types").begin(); it != mime.at("types").end(); ++it) {
      rows.emplace_back(it.key(), it.value().at("percent").get<double>());
    }
    std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
      return a.second > b.second;
    });
    for (const auto& [type, pct] : rows) {
      r << "  " << std::left << std::setw(32) << type << std::right
        << std::setw(6) << Fixed(pct, 1) << "%\n";
    }
  } catch (const Json::exception& e) {
    return absl::InvalidArgumentError(std::string("malformed report: ") +
                                      e.what());
  }

  absl::StatusOr<std::string> ratio_csv = ReadText(dir / "ratio_series.csv");
  if (ratio_csv.ok()) {
    std::istringstream lines(*ratio_csv);
    std::string line;
    std::getline(lines, line);  // header
    double lo = 2, hi = -1;
    size_t windows = 0, empty = 0;
    while (std::getline(lines, line)) {
      ++windows;
      std::string ratio = line.substr(line.rfind(',') + 1);
      if (ratio.empty()) {
        ++empty;
        continue;
      }
      double v = std::stod(ratio);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    r << "ratio windows " << windows << " (" << empty << " empty)";
    if (hi >= lo) r << ", range [" << Fixed(lo, 4) << ", " << Fixed(hi, 4) << "]";
    r << "\n";
  }

  if (opts.out_path.empty()) {
    out << r.str();
    return absl::OkStatus();
  }
  return WriteText(opts.out_path, r.str());
}

absl::Status RunProxy(const ProxyOptions& opts, const std::atomic<bool>& stop,
                      std::ostream& out, ReadyCallback ready) {
  if (absl::Status s = EnsureDir(opts.out_dir); !s.ok()) return s;
  const fs::path dir(opts.out_dir);
  ProxyConfig config;
  config.listen_address = opts.listen;
  config.control_address = opts.control;
  config.mode = opts.mode;
  config.injector.zone = opts.zone;
  config.injector.static_label = opts.static_label;
  if (opts.seed) config.injector.seed = *opts.seed;
  config.payload_server_address = opts.payload_address;
  config.exchange_log_path = (dir / "exchanges.jsonl").string();
  config.tag_log_path = (dir / "tags.jsonl").string();
  config.error_log_path = (dir / "proxy_errors.jsonl").string();

  auto svc = ProxyService::Create(config);
  if (!svc.ok()) return svc.status();
  absl::StatusOr<ProxyService::Ports> ports = (*svc)->Start();
  if (!ports.ok()) return ports.status();
  out << "proxy on port " << ports->proxy << ", control on port "
      << ports->control << ", mode " << ProxyModeName(opts.mode) << std::endl;
  if (ready) ready(ports->proxy, ports->control);

  auto last_flush = std::chrono::steady_clock::now();
  while (!stop.load()) {
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
    if (std::chrono::steady_clock::now() - last_flush > std::chrono::seconds(1)) {
      (void)(*svc)->FlushLogs();
      last_flush = std::chrono::steady_clock::now();
    }
  }
  (*svc)->Stop();
  if (absl::Status s = (*svc)->FlushLogs(); !s.ok()) return s;
  InterceptEngine::Counters c = (*svc)->engine().counters();
  out << "proxy stopped: " << c.exchanges << " exchanges, " << c.tags
      << " tags\n";
  return WriteManifest({"proxy",
                        {},
                        opts.seed,
                        opts.out_dir,
                        {"exchanges.jsonl", "tags.jsonl", "proxy_errors.jsonl"}});
}

absl::Status RunDns(const DnsOptions& opts, const std::atomic<bool>& stop,
                    std::ostream& out, ReadyCallback ready) {
  ZoneConfig zc{opts.zone, opts.payload_address, opts.ttl};
  if (absl::Status s = ValidateZoneConfig(zc); !s.ok()) return s;
  absl::StatusOr<net::HostPort> where = net::ParseHostPort(opts.listen);
  if (!where.ok()) return where.status();
  if (absl::Status s = EnsureDir(opts.out_dir); !s.ok()) return s;

  WildcardZone zone(zc);
  UdpDnsResponder responder(&zone);
  absl::StatusOr<uint16_t> port = responder.Start(*where);
  if (!port.ok()) return port.status();
  out << "dns for " << zc.zone << " on udp port " << *port << std::endl;
  if (ready) ready(*port, 0);
  while (!stop.load()) {
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
  responder.Stop();
  const fs::path dir(opts.out_dir);
  if (absl::Status s = WriteDnsLog(zone.Log(), (dir / "dns.jsonl").string());
      !s.ok()) {
    return s;
  }
  out << "dns stopped: " << zone.LogSize() << " queries logged\n";
  return WriteManifest({"dns", {}, std::nullopt, opts.out_dir, {"dns.jsonl"}});
}

int RunCli(int argc, const char* const* argv, std::ostream& out,
           std::ostream& err, const std::atomic<bool>& stop) {
  CLI::App app{"Beacon-tag injection simulator and analysis toolkit", "tagtrace"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  const std::map<std::string, ProxyMode> modes = {
      {"passive", ProxyMode::kPassive}, {"active", ProxyMode::kActive}};

  SimulateOptions sim;
  auto* simulate = app.add_subcommand("simulate", "Run a seeded scenario");
  simulate->add_option("--config", sim.config_path, "Scenario JSON file")
      ->check(CLI::ExistingFile);
  simulate->add_option("--seed", sim.seed, "Override the scenario seed");
  simulate->add_option("--clients", sim.clients, "Override client_count");
  simulate->add_option("--duration", sim.duration, "Override duration (s)");
  simulate->add_option("--mode", sim.mode, "passive or active")
      ->transform(CLI::CheckedTransformer(modes, CLI::ignore_case));
  simulate->add_option("--zone", sim.zone, "Beacon zone");
  simulate->add_option("--out", sim.out_dir, "Output directory")->required();

  AnalyzeOptions an;
  auto* analyze = app.add_subcommand("analyze", "Correlate logs into a report");
  analyze->add_option("--logs,--config", an.log_dir, "Directory with logs")
      ->required()
      ->check(CLI::ExistingDirectory);
  analyze->add_option("--vulndb", an.vulndb_path, "Vulnerability CSV");
  analyze->add_option("--zone", an.zone, "Override beacon zone");
  analyze->add_option("--static-label", an.static_label, "Override static label");
  analyze->add_option("--window", an.window_seconds, "Window length (s)")
      ->check(CLI::PositiveNumber);
  analyze->add_option("--out", an.out_dir, "Report directory")->required();

  InjectOptions inj;
  auto* inject = app.add_subcommand("inject", "Rewrite an exchange log offline");
  inject->add_option("--in,--config", inj.in_path, "Exchange log")->required();
  inject->add_option("--out", inj.out_path, "Rewritten exchange log")->required();
  inject->add_option("--tags", inj.tag_log_path, "Tag log to write");
  inject->add_option("--seed", inj.seed, "Dynamic label seed");
  inject->add_option("--zone", inj.zone, "Beacon zone");
  inject->add_option("--static-label", inj.static_label, "Static label");

  ClassifyOptions cls;
  auto* classify = app.add_subcommand("classify-ua", "Classify User-Agent strings");
  classify->add_option("--vulndb,--config", cls.vulndb_path, "Vulnerability CSV");
  classify->add_option("--in", cls.in_path, "File with one User-Agent per line");
  classify->add_option("agents", cls.agents, "User-Agent strings");

  ReportOptions rep;
  auto* report = app.add_subcommand("report", "Summarize an analysis directory");
  report->add_option("--in,--config", rep.analysis_dir, "Analysis directory")
      ->required();
  report->add_option("--out", rep.out_path, "Write summary here");

  ProxyOptions px;
  auto* proxy = app.add_subcommand("proxy", "Run the intercepting relay");
  proxy->add_option("--listen", px.listen, "Proxy address");
  proxy->add_option("--control", px.control, "Control socket address");
  proxy->add_option("--mode", px.mode, "passive or active")
      ->transform(CLI::CheckedTransformer(modes, CLI::ignore_case));
  proxy->add_option("--zone", px.zone, "Beacon zone");
  proxy->add_option("--static-label", px.static_label, "Static label");
  proxy->add_option("--seed", px.seed, "Dynamic label seed");
  proxy->add_option("--payload", px.payload_address, "Payload server address");
  proxy->add_option("--out", px.out_dir, "Log directory")->required();

  DnsOptions dn;
  auto* dns = app.add_subcommand("dns", "Run the wildcard DNS responder");
  dns->add_option("--listen", dn.listen, "UDP address");
  dns->add_option("--zone", dn.zone, "Zone to answer for");
  dns->add_option("--payload", dn.payload_address, "Address in every answer");
  dns->add_option("--ttl", dn.ttl, "Answer TTL");
  dns->add_option("--out", dn.out_dir, "Log directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  absl::Status s;
  if (*simulate) {
    s = Simulate(sim, out);
  } else if (*analyze) {
    s = Analyze(an, out);
  } else if (*inject) {
    s = Inject(inj, out);
  } else if (*classify) {
    if (cls.in_path.empty() && cls.agents.empty()) {
      err << "classify-ua: give --in or at least one User-Agent\n";
      return kExitUsage;
    }
    s = ClassifyUa(cls, out);
  } else if (*report) {
    s = Report(rep, out);
  } else if (*proxy) {
    s = RunProxy(px, stop, out);
  } else if (*dns) {
    s = RunDns(dn, stop, out);
  }
  if (!s.ok()) {
    err << "tagtrace: " << Msg(s) << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace tagtrace::cli
