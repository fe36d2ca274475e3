// User-agent analysis: product-token extraction, matching against a local
// vulnerability database, and the browser vulnerability ratio
//
//   b = V / (V + V')
//
// where V counts unique user-agent strings matching a database entry and V'
// counts the rest. Uniqueness is exact equality of the raw header value.

#ifndef TAGTRACE_UA_VULN_H_
#define TAGTRACE_UA_VULN_H_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "tagtrace/http_model.h"

namespace tagtrace {

struct ProductToken {
  std::string name;                    // lowercased
  std::optional<std::string> version;  // dotted numeric

  bool operator==(const ProductToken&) const = default;
};

// Extracts product tokens in order of appearance.
//
// Outside parentheses every whitespace-separated word is a token: "Name/1.2"
// yields (name, 1.2) and a bare "Name" yields (name, none). Inside
// parentheses the text is split on ';' and a component is kept only when it
// carries a version, either as "Name/1.2" or as a trailing "Name 1.2".
// Fragments that do not fit are dropped.
std::vector<ProductToken> ParseUserAgent(std::string_view raw);

// Component-wise comparison of dotted versions. Missing components count as
// zero; within a component the numeric prefix is compared first, then the
// remaining suffix lexicographically. Returns <0, 0 or >0.
int CompareVersions(std::string_view a, std::string_view b);

struct VersionRange {
  std::optional<std::string> min;  // inclusive, open when absent
  std::optional<std::string> max;  // inclusive, open when absent

  bool Contains(std::string_view version) const;
  bool operator==(const VersionRange&) const = default;
};

struct VulnEntry {
  std::string product;  // lowercased
  VersionRange range;

  bool operator==(const VulnEntry&) const = default;
};

class VulnDb {
 public:
  VulnDb() = default;

  // Fails when min > max.
  absl::Status Add(std::string_view product, VersionRange range);

  bool Matches(const ProductToken& token) const;

  const std::vector<VulnEntry>& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }

 private:
  std::vector<VulnEntry> entries_;
};

// CSV with a header line, then "product,min_version,max_version" per line;
// an empty bound is open. Errors name the offending line.
absl::StatusOr<VulnDb> ParseVulnDb(std::string_view text);
absl::StatusOr<VulnDb> LoadVulnDb(const std::string& path);
std::string FormatVulnDb(const VulnDb& db);

enum class Verdict { kVulnerable, kNotVulnerable };
enum class Reason { kMatchedEntry, kMissingAgent, kNoVersion, kNoDbMatch };

struct UaClassification {
  Verdict verdict = Verdict::kNotVulnerable;
  Reason reason = Reason::kNoDbMatch;

  bool operator==(const UaClassification&) const = default;
};

std::string_view VerdictName(Verdict v);
std::string_view ReasonName(Reason r);

// Precedence: missing agent, then no versioned token, then database match.
// Any matching token makes the whole string vulnerable.
UaClassification Classify(std::string_view raw, const VulnDb& db);

// v / (v + v_bar). An empty population has no ratio and is reported as an
// error rather than zero.
absl::StatusOr<double> VulnerabilityRatio(uint64_t vulnerable,
                                          uint64_t not_vulnerable);

struct UaObservation {
  double timestamp = 0.0;
  std::string raw;  // empty when the request had no User-Agent header

  bool operator==(const UaObservation&) const = default;
};

// A user-agent string with its first sighting and extracted tokens.
struct UaRecord {
  std::string raw;
  double first_seen = 0.0;
  std::vector<ProductToken> product_tokens;
};

// Distinct raw strings in first-seen order.
std::vector<UaRecord> CollectUaRecords(std::span<const UaObservation> uas);

// User agents seen by a relay: one observation per non-encrypted exchange.
std::vector<UaObservation> ObservationsFromExchanges(
    std::span<const HttpExchange> exchanges);

inline constexpr double kDefaultWindowSeconds = 900.0;

struct RatioPoint {
  double window_start = 0.0;
  uint64_t vulnerable = 0;
  uint64_t not_vulnerable = 0;
  std::optional<double> ratio;  // absent for an empty window

  bool operator==(const RatioPoint&) const = default;
};

struct RatioSeries {
  double window_seconds = kDefaultWindowSeconds;
  std::vector<RatioPoint> points;

  bool operator==(const RatioSeries&) const = default;
};

// Windows are [k*w, (k+1)*w) on the scenario clock and cover every window from
// the earliest to the latest observation, empty ones included. Each window
// counts the distinct raw strings observed inside it; each string is
// classified once. Fails when window_seconds <= 0.
absl::StatusOr<RatioSeries> ComputeRatioSeries(
    std::span<const UaObservation> uas, const VulnDb& db,
    double window_seconds = kDefaultWindowSeconds);

struct GrowthPoint {
  double window_start = 0.0;
  uint64_t cumulative_unique = 0;

  bool operator==(const GrowthPoint&) const = default;
};

// Cumulative number of distinct raw strings at the end of each window.
absl::StatusOr<std::vector<GrowthPoint>> UniqueUaGrowth(
    std::span<const UaObservation> uas,
    double window_seconds = kDefaultWindowSeconds);

// Line-delimited JSON: {"timestamp": t, "raw": "..."}.
absl::StatusOr<std::vector<UaObservation>> ReadUaLog(const std::string& path);
absl::Status WriteUaLog(std::span<const UaObservation> uas,
                        const std::string& path);

// "window_start,vulnerable,not_vulnerable,ratio"; undefined ratios are empty.
std::string FormatRatioCsv(const RatioSeries& series);
std::string FormatGrowthCsv(std::span<const GrowthPoint> growth);

}  // namespace tagtrace

#endif  // TAGTRACE_UA_VULN_H_
