// Joins the relay's logs with the DNS oracle log.
//
// Works only from what an exit relay and a zone operator can record: the
// exchange log, the tag log and the DNS query log. The simulator's ground
// truth is never an input.

#ifndef TAGTRACE_CORRELATOR_H_
#define TAGTRACE_CORRELATOR_H_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "tagtrace/dns_sim.h"
#include "tagtrace/http_model.h"
#include "tagtrace/injector.h"
#include "tagtrace/ua_vuln.h"

namespace tagtrace {

struct BeaconNames {
  std::string zone;
  std::string static_label;

  std::string StaticName() const { return static_label + "." + zone; }
};

// Zone and static label of the first static tag in the log.
std::optional<BeaconNames> DeriveBeaconNames(std::span<const Tag> tags);

// One resolution of the static name per browser lifetime.
uint64_t CountUniqueUsers(std::span<const DnsQueryRecord> dns,
                          const BeaconNames& names);

struct Reappearance {
  std::string subdomain;
  uint64_t exchange_id = 0;
  double injected_at = 0.0;
  std::vector<double> query_times;  // sorted
  std::vector<std::string> sources;

  bool operator==(const Reappearance&) const = default;
};

// Issued dynamic labels that were resolved two or more times.
std::vector<Reappearance> DetectReappearances(
    std::span<const Tag> tags, std::span<const DnsQueryRecord> dns,
    const BeaconNames& names);

struct Anomaly {
  std::string kind;  // unissued_label, unknown_name, hit_before_injection
  std::string name;
  double timestamp = 0.0;

  bool operator==(const Anomaly&) const = default;
};

struct TagAccounting {
  uint64_t static_issued = 0;
  uint64_t dynamic_issued = 0;
  uint64_t static_queries = 0;
  uint64_t dynamic_queries = 0;      // records for issued dynamic labels
  uint64_t dynamic_labels_hit = 0;   // issued labels resolved at least once
  uint64_t tagged_exchanges = 0;
  std::vector<Anomaly> anomalies;

  bool operator==(const TagAccounting&) const = default;
};

TagAccounting AccountTags(std::span<const Tag> tags,
                          std::span<const DnsQueryRecord> dns,
                          const BeaconNames& names);

struct TimeRange {
  double first = 0.0;
  double last = 0.0;
};

// Fails when DNS records lie entirely before the first exchange or more than
// `max_lag_seconds` after the last one, which points at mismatched clocks or
// logs from different runs.
absl::Status CheckTimeAlignment(std::span<const HttpExchange> exchanges,
                                std::span<const DnsQueryRecord> dns,
                                double max_lag_seconds = 86400.0);

struct CorrelationOptions {
  std::optional<BeaconNames> names;  // derived from the tag log when absent
  double window_seconds = kDefaultWindowSeconds;
  double max_lag_seconds = 86400.0;
};

struct CorrelationReport {
  BeaconNames names;
  uint64_t exchanges = 0;
  uint64_t encrypted_exchanges = 0;
  std::optional<TimeRange> exchange_range;
  std::optional<TimeRange> dns_range;

  uint64_t unique_users = 0;
  uint64_t static_query_sources = 0;  // distinct source addresses
  std::vector<Reappearance> reappearances;
  TagAccounting accounting;

  uint64_t unique_user_agents = 0;
  uint64_t vulnerable_user_agents = 0;
  std::optional<double> vulnerability_ratio;
  RatioSeries ratio_series;
  std::vector<GrowthPoint> ua_growth;
  MimeDistribution mime;
};

absl::StatusOr<CorrelationReport> BuildReport(
    std::span<const HttpExchange> exchanges, std::span<const Tag> tags,
    std::span<const DnsQueryRecord> dns, const VulnDb& db,
    const CorrelationOptions& options = {});

std::string FormatReportJson(const CorrelationReport& report);
std::string FormatMimeCsv(const MimeDistribution& mime);

// report.json, ratio_series.csv, ua_growth.csv and mime_distribution.csv.
absl::Status WriteReport(const CorrelationReport& report,
                         const std::string& dir);

}  // namespace tagtrace

#endif  // TAGTRACE_CORRELATOR_H_
