#include "tagtrace/dns_sim.h"

#include <algorithm>
#include <arpa/inet.h>

#include "str_util.h"
#include "jsonl.h"
#include "tagtrace/http_model.h"

namespace tagtrace {

bool IsValidDnsLabel(std::string_view label) {
  if (label.empty() || label.size() > 63) return false;
  if (label.front() == '-' || label.back() == '-') return false;
  return std::all_of(label.begin(), label.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
           (c >= '0' && c <= '9') || c == '-' || c == '_';
  });
}

bool IsValidDomainName(std::string_view name) {
  if (!name.empty() && name.back() == '.') name.remove_suffix(1);
  if (name.empty() || name.size() > 253) return false;
  size_t start = 0;
  while (true) {
    size_t dot = name.find('.', start);
    std::string_view label = name.substr(
        start, dot == std::string_view::npos ? name.npos : dot - start);
    if (!IsValidDnsLabel(label)) return false;
    if (dot == std::string_view::npos) return true;
    start = dot + 1;
  }
}

std::string NormalizeDnsName(std::string_view name) {
  if (!name.empty() && name.back() == '.') name.remove_suffix(1);
  return ToLowerAscii(name);
}

bool IsInZone(std::string_view name, std::string_view zone) {
  if (name.size() == zone.size()) return name == zone;
  return name.size() > zone.size() && name.ends_with(zone) &&
         name[name.size() - zone.size() - 1] == '.';
}

std::optional<std::string> LabelUnderZone(std::string_view name,
                                          std::string_view zone) {
  std::string n = NormalizeDnsName(name);
  std::string z = NormalizeDnsName(zone);
  if (n.size() <= z.size() || !IsInZone(n, z)) return std::nullopt;
  std::string label = n.substr(0, n.size() - z.size() - 1);
  if (label.find('.') != std::string::npos) return std::nullopt;
  return label;
}

absl::Status ValidateZoneConfig(const ZoneConfig& config) {
  if (!IsValidDomainName(config.zone)) {
    return absl::InvalidArgumentError(
        internal::Cat("invalid zone '", config.zone, "'"));
  }
  in_addr addr{};
  if (inet_pton(AF_INET, config.payload_address.c_str(), &addr) != 1) {
    return absl::InvalidArgumentError(internal::Cat(
        "payload address '", config.payload_address, "' is not IPv4"));
  }
  return absl::OkStatus();
}

WildcardZone::WildcardZone(ZoneConfig config) : config_(std::move(config)) {
  config_.zone = NormalizeDnsName(config_.zone);
}

ResolveResult WildcardZone::Resolve(std::string_view name,
                                    std::string_view source, double now) {
  if (!IsValidDomainName(name)) return {ResolveOutcome::kInvalidName, {}};
  std::string normalized = NormalizeDnsName(name);
  if (!IsInZone(normalized, config_.zone)) {
    return {ResolveOutcome::kRefused, {}};
  }
  {
    std::lock_guard<std::mutex> lock(mu_);
    log_.push_back({std::move(normalized), std::string(source), now});
  }
  return {ResolveOutcome::kAnswered, config_.payload_address};
}

std::vector<DnsQueryRecord> WildcardZone::Log() const {
  std::lock_guard<std::mutex> lock(mu_);
  return log_;
}

size_t WildcardZone::LogSize() const {
  std::lock_guard<std::mutex> lock(mu_);
  return log_.size();
}

std::vector<DnsQueryRecord> QueryLogByName(std::span<const DnsQueryRecord> log,
                                           std::string_view name) {
  std::string wanted = NormalizeDnsName(name);
  std::vector<DnsQueryRecord> out;
  for (const DnsQueryRecord& r : log) {
    if (NormalizeDnsName(r.name) == wanted) out.push_back(r);
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const DnsQueryRecord& a, const DnsQueryRecord& b) {
                     return a.timestamp < b.timestamp;
                   });
  return out;
}

std::string SerializeDnsRecord(const DnsQueryRecord& record) {
  internal::Json j = internal::Json::object();
  j["timestamp"] = record.timestamp;
  j["source"] = record.source;
  j["name"] = record.name;
  return internal::DumpCompact(j);
}

absl::StatusOr<std::vector<DnsQueryRecord>> ReadDnsLog(
    const std::string& path) {
  std::vector<DnsQueryRecord> out;
  absl::Status s =
      internal::ForEachJsonLine(path, [&](const internal::Json& j) {
        if (absl::Status st = internal::RequireObject(j); !st.ok()) return st;
        DnsQueryRecord r;
        absl::Status st = internal::GetDouble(j, "timestamp", &r.timestamp);
        if (st.ok()) st = internal::GetString(j, "source", &r.source);
        if (st.ok()) st = internal::GetString(j, "name", &r.name);
        if (!st.ok()) return st;
        r.name = NormalizeDnsName(r.name);
        out.push_back(std::move(r));
        return absl::OkStatus();
      });
  if (!s.ok()) return s;
  return out;
}

absl::Status WriteDnsLog(std::span<const DnsQueryRecord> log,
                         const std::string& path) {
  std::string data;
  for (const DnsQueryRecord& r : log) {
    data += SerializeDnsRecord(r);
    data += '\n';
  }
  return internal::WriteWholeFile(path, data);
}

}  // namespace tagtrace
