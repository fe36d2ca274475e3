// Wildcard DNS oracle for the beacon zone.
//
// Every name at or below the zone resolves to the payload server and is
// logged with its source. Names outside the zone are refused and not logged;
// syntactically invalid names are rejected and not logged.

#ifndef TAGTRACE_DNS_SIM_H_
#define TAGTRACE_DNS_SIM_H_

#include <cstdint>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"

namespace tagtrace {

bool IsValidDnsLabel(std::string_view label);
bool IsValidDomainName(std::string_view name);

// Lowercases and drops one trailing dot.
std::string NormalizeDnsName(std::string_view name);

// True when `name` (normalized) equals `zone` or ends with "." + zone.
bool IsInZone(std::string_view name, std::string_view zone);

// Leftmost label of `name` when `name` is exactly one label below `zone`.
std::optional<std::string> LabelUnderZone(std::string_view name,
                                          std::string_view zone);

struct DnsQueryRecord {
  std::string name;    // normalized
  std::string source;  // client address or simulated client id
  double timestamp = 0.0;

  bool operator==(const DnsQueryRecord&) const = default;
};

struct ZoneConfig {
  std::string zone = "beacon.test";
  std::string payload_address = "192.0.2.80";
  uint32_t ttl_seconds = 0;
};

absl::Status ValidateZoneConfig(const ZoneConfig& config);

enum class ResolveOutcome { kAnswered, kRefused, kInvalidName };

struct ResolveResult {
  ResolveOutcome outcome = ResolveOutcome::kRefused;
  std::string address;  // set when answered
};

// Thread-safe: concurrent Resolve calls append to the log in a total order.
class WildcardZone {
 public:
  explicit WildcardZone(ZoneConfig config);

  ResolveResult Resolve(std::string_view name, std::string_view source,
                        double now);

  const ZoneConfig& config() const { return config_; }
  std::vector<DnsQueryRecord> Log() const;
  size_t LogSize() const;

 private:
  ZoneConfig config_;
  mutable std::mutex mu_;
  std::vector<DnsQueryRecord> log_;
};

// Records whose name equals `name` after normalization, sorted by timestamp
// (stable for ties).
std::vector<DnsQueryRecord> QueryLogByName(std::span<const DnsQueryRecord> log,
                                           std::string_view name);

// Line-delimited JSON: {"timestamp": t, "source": "...", "name": "..."}.
absl::StatusOr<std::vector<DnsQueryRecord>> ReadDnsLog(const std::string& path);
absl::Status WriteDnsLog(std::span<const DnsQueryRecord> log,
                         const std::string& path);
std::string SerializeDnsRecord(const DnsQueryRecord& record);

}  // namespace tagtrace

#endif  // TAGTRACE_DNS_SIM_H_
