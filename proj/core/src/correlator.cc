#include "tagtrace/correlator.h"

#include <algorithm>
#include <filesystem>
#include <map>
#include <set>
#include <unordered_map>

#include "str_util.h"
#include "jsonl.h"

namespace tagtrace {

namespace {

using internal::Json;

struct IssuedDynamic {
  const Tag* tag;
  std::vector<const DnsQueryRecord*> hits;
};

// Issued dynamic labels with their DNS records, in issue order.
std::vector<IssuedDynamic> JoinDynamic(std::span<const Tag> tags,
                                       std::span<const DnsQueryRecord> dns,
                                       const BeaconNames& names,
                                       std::vector<Anomaly>* anomalies) {
  std::vector<IssuedDynamic> issued;
  std::unordered_map<std::string, size_t> index;
  for (const Tag& t : tags) {
    if (t.kind != TagKind::kDynamic) continue;
    std::string label = ToLowerAscii(t.subdomain);
    if (index.try_emplace(label, issued.size()).second) {
      issued.push_back({&t, {}});
    }
  }
  const std::string zone = NormalizeDnsName(names.zone);
  const std::string static_label = ToLowerAscii(names.static_label);
  for (const DnsQueryRecord& r : dns) {
    std::string name = NormalizeDnsName(r.name);
    if (!IsInZone(name, zone)) continue;
    std::optional<std::string> label = LabelUnderZone(name, zone);
    if (!label) {
      if (anomalies) anomalies->push_back({"unknown_name", name, r.timestamp});
      continue;
    }
    if (*label == static_label) continue;
    auto it = index.find(*label);
    if (it == index.end()) {
      if (anomalies) anomalies->push_back({"unissued_label", name, r.timestamp});
      continue;
    }
    IssuedDynamic& d = issued[it->second];
    if (r.timestamp < d.tag->injected_at && anomalies) {
      anomalies->push_back({"hit_before_injection", name, r.timestamp});
    }
    d.hits.push_back(&r);
  }
  for (IssuedDynamic& d : issued) {
    std::stable_sort(d.hits.begin(), d.hits.end(),
                     [](const DnsQueryRecord* a, const DnsQueryRecord* b) {
                       return a->timestamp < b->timestamp;
                     });
  }
  return issued;
}

std::optional<TimeRange> RangeOf(std::span<const double> times) {
  if (times.empty()) return std::nullopt;
  auto [lo, hi] = std::minmax_element(times.begin(), times.end());
  return TimeRange{*lo, *hi};
}

std::optional<TimeRange> ExchangeRange(std::span<const HttpExchange> ex) {
  std::vector<double> t;
  t.reserve(ex.size());
  for (const HttpExchange& e : ex) t.push_back(e.timestamp);
  return RangeOf(t);
}

std::optional<TimeRange> DnsRange(std::span<const DnsQueryRecord> dns) {
  std::vector<double> t;
  t.reserve(dns.size());
  for (const DnsQueryRecord& r : dns) t.push_back(r.timestamp);
  return RangeOf(t);
}

}  // namespace

std::optional<BeaconNames> DeriveBeaconNames(std::span<const Tag> tags) {
  for (const Tag& t : tags) {
    if (t.kind != TagKind::kStatic) continue;
    std::string host = UrlHost(t.url);
    std::string label = ToLowerAscii(t.subdomain);
    if (host.size() <= label.size() + 1 || !host.starts_with(label + ".")) {
      continue;
    }
    return BeaconNames{host.substr(label.size() + 1), label};
  }
  return std::nullopt;
}

uint64_t CountUniqueUsers(std::span<const DnsQueryRecord> dns,
                          const BeaconNames& names) {
  const std::string wanted = NormalizeDnsName(names.StaticName());
  return std::count_if(dns.begin(), dns.end(), [&](const DnsQueryRecord& r) {
    return NormalizeDnsName(r.name) == wanted;
  });
}

std::vector<Reappearance> DetectReappearances(
    std::span<const Tag> tags, std::span<const DnsQueryRecord> dns,
    const BeaconNames& names) {
  std::vector<Reappearance> out;
  for (const IssuedDynamic& d : JoinDynamic(tags, dns, names, nullptr)) {
    if (d.hits.size() < 2) continue;
    Reappearance r;
    r.subdomain = ToLowerAscii(d.tag->subdomain);
    r.exchange_id = d.tag->exchange_id;
    r.injected_at = d.tag->injected_at;
    for (const DnsQueryRecord* h : d.hits) {
      r.query_times.push_back(h->timestamp);
      r.sources.push_back(h->source);
    }
    out.push_back(std::move(r));
  }
  return out;
}

TagAccounting AccountTags(std::span<const Tag> tags,
                          std::span<const DnsQueryRecord> dns,
                          const BeaconNames& names) {
  TagAccounting a;
  std::set<uint64_t> exchanges;
  for (const Tag& t : tags) {
    (t.kind == TagKind::kStatic ? a.static_issued : a.dynamic_issued)++;
    exchanges.insert(t.exchange_id);
  }
  a.tagged_exchanges = exchanges.size();
  a.static_queries = CountUniqueUsers(dns, names);
  for (const IssuedDynamic& d : JoinDynamic(tags, dns, names, &a.anomalies)) {
    a.dynamic_queries += d.hits.size();
    if (!d.hits.empty()) ++a.dynamic_labels_hit;
  }
  return a;
}

absl::Status CheckTimeAlignment(std::span<const HttpExchange> exchanges,
                                std::span<const DnsQueryRecord> dns,
                                double max_lag_seconds) {
  std::optional<TimeRange> ex = ExchangeRange(exchanges);
  std::optional<TimeRange> q = DnsRange(dns);
  if (!ex || !q) return absl::OkStatus();
  if (q->last < ex->first || q->first > ex->last + max_lag_seconds) {
    return absl::FailedPreconditionError(internal::Cat(
        "DNS log [", q->first, ", ", q->last,
        "] does not overlap the exchange log [", ex->first, ", ", ex->last,
        "]; the logs come from different clocks or runs"));
  }
  return absl::OkStatus();
}

absl::StatusOr<CorrelationReport> BuildReport(
    std::span<const HttpExchange> exchanges, std::span<const Tag> tags,
    std::span<const DnsQueryRecord> dns, const VulnDb& db,
    const CorrelationOptions& options) {
  if (absl::Status s =
          CheckTimeAlignment(exchanges, dns, options.max_lag_seconds);
      !s.ok()) {
    return s;
  }
  CorrelationReport r;
  if (options.names) {
    r.names = *options.names;
  } else if (std::optional<BeaconNames> n = DeriveBeaconNames(tags)) {
    r.names = *n;
  } else {
    InjectorConfig defaults;
    r.names = {defaults.zone, defaults.static_label};
  }
  r.names.zone = NormalizeDnsName(r.names.zone);
  r.names.static_label = ToLowerAscii(r.names.static_label);

  r.exchanges = exchanges.size();
  for (const HttpExchange& e : exchanges) r.encrypted_exchanges += e.is_encrypted;
  r.exchange_range = ExchangeRange(exchanges);
  r.dns_range = DnsRange(dns);

  r.unique_users = CountUniqueUsers(dns, r.names);
  std::set<std::string> sources;
  const std::string static_name = r.names.StaticName();
  for (const DnsQueryRecord& q : dns) {
    if (NormalizeDnsName(q.name) == static_name) sources.insert(q.source);
  }
  r.static_query_sources = sources.size();
  r.reappearances = DetectReappearances(tags, dns, r.names);
  r.accounting = AccountTags(tags, dns, r.names);

  std::vector<UaObservation> uas = ObservationsFromExchanges(exchanges);
  std::vector<UaRecord> records = CollectUaRecords(uas);
  r.unique_user_agents = records.size();
  for (const UaRecord& u : records) {
    if (Classify(u.raw, db).verdict == Verdict::kVulnerable) {
      ++r.vulnerable_user_agents;
    }
  }
  if (!records.empty()) {
    absl::StatusOr<double> ratio = VulnerabilityRatio(
        r.vulnerable_user_agents, r.unique_user_agents - r.vulnerable_user_agents);
    if (ratio.ok()) r.vulnerability_ratio = *ratio;
  }
  absl::StatusOr<RatioSeries> series =
      ComputeRatioSeries(uas, db, options.window_seconds);
  if (!series.ok()) return series.status();
  r.ratio_series = *std::move(series);
  absl::StatusOr<std::vector<GrowthPoint>> growth =
      UniqueUaGrowth(uas, options.window_seconds);
  if (!growth.ok()) return growth.status();
  r.ua_growth = *std::move(growth);
  r.mime = ComputeMimeDistribution(exchanges);
  return r;
}

namespace {

Json RangeJson(const std::optional<TimeRange>& r) {
  if (!r) return nullptr;
  return Json{{"first", r->first}, {"last", r->last}};
}

}  // namespace

std::string FormatReportJson(const CorrelationReport& r) {
  Json j = Json::object();
  j["zone"] = r.names.zone;
  j["static_name"] = r.names.StaticName();
  j["exchanges"] = r.exchanges;
  j["encrypted_exchanges"] = r.encrypted_exchanges;
  j["exchange_time_range"] = RangeJson(r.exchange_range);
  j["dns_time_range"] = RangeJson(r.dns_range);
  j["unique_users"] = r.unique_users;
  j["static_query_sources"] = r.static_query_sources;

  const TagAccounting& a = r.accounting;
  j["tags"] = {{"static_issued", a.static_issued},
               {"dynamic_issued", a.dynamic_issued},
               {"tagged_exchanges", a.tagged_exchanges},
               {"static_queries", a.static_queries},
               {"dynamic_queries", a.dynamic_queries},
               {"dynamic_labels_hit", a.dynamic_labels_hit}};
  Json reappear = Json::array();
  for (const Reappearance& x : r.reappearances) {
    reappear.push_back({{"subdomain", x.subdomain},
                        {"exchange_id", x.exchange_id},
                        {"injected_at", x.injected_at},
                        {"query_times", x.query_times},
                        {"sources", x.sources}});
  }
  j["reappearances"] = reappear;
  Json anomalies = Json::array();
  for (const Anomaly& x : a.anomalies) {
    anomalies.push_back(
        {{"kind", x.kind}, {"name", x.name}, {"timestamp", x.timestamp}});
  }
  j["anomalies"] = anomalies;

  j["user_agents"] = {
      {"unique", r.unique_user_agents},
      {"vulnerable", r.vulnerable_user_agents},
      {"ratio", r.vulnerability_ratio ? Json(*r.vulnerability_ratio)
                                      : Json(nullptr)},
      {"window_seconds", r.ratio_series.window_seconds},
      {"windows", r.ratio_series.points.size()}};
  Json mime = Json::object();
  for (const auto& [type, count] : r.mime.counts()) {
    mime[type] = {{"count", count}, {"percent", r.mime.Percent(type)}};
  }
  j["mime_distribution"] = {{"total", r.mime.total()}, {"types", mime}};
  return j.dump(2) + "\n";
}

std::string FormatMimeCsv(const MimeDistribution& mime) {
  std::vector<std::pair<std::string, uint64_t>> rows(mime.counts().begin(),
                                                     mime.counts().end());
  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
    return a.second > b.second;
  });
  std::string out = "mime,count,percent\n";
  for (const auto& [type, count] : rows) {
    internal::Append(&out, type, ",", count, ",", mime.Percent(type), "\n");
  }
  return out;
}

absl::Status WriteReport(const CorrelationReport& report,
                         const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) {
    return absl::InternalError(
        internal::Cat("cannot create ", dir, ": ", ec.message()));
  }
  const std::filesystem::path base(dir);
  std::pair<const char*, std::string> files[] = {
      {"report.json", FormatReportJson(report)},
      {"ratio_series.csv", FormatRatioCsv(report.ratio_series)},
      {"ua_growth.csv", FormatGrowthCsv(report.ua_growth)},
      {"mime_distribution.csv", FormatMimeCsv(report.mime)},
  };
  for (const auto& [name, data] : files) {
    if (absl::Status s = internal::WriteWholeFile((base / name).string(), data);
        !s.ok()) {
      return s;
    }
  }
  return absl::OkStatus();
}

}  // namespace tagtrace
