// Traffic records shared by every stage of the pipeline.
//
// An HttpExchange is what an intercepting relay can see of one
// request/response pair. The ground_truth_client field is filled in only by
// the simulator and exists so that tests can judge analysis output; analysis
// code must never read it.

#ifndef TAGTRACE_HTTP_MODEL_H_
#define TAGTRACE_HTTP_MODEL_H_

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace tagtrace {

inline constexpr std::string_view kUnknownMime = "unknown";

struct Header {
  std::string name;
  std::string value;

  bool operator==(const Header&) const = default;
};

// Ordered multimap. Lookup is case-insensitive on the name; order and
// duplicates are preserved exactly as received.
using HeaderList = std::vector<Header>;

// Returns the first header whose name matches case-insensitively.
std::optional<std::string_view> FindHeader(const HeaderList& headers,
                                           std::string_view name);

// Replaces the value of the first matching header, or appends one.
// Later duplicates of the same name are removed.
void SetHeader(HeaderList& headers, std::string_view name,
               std::string_view value);

void RemoveHeader(HeaderList& headers, std::string_view name);

// A field read from a log that this version does not know about. The value is
// kept as serialized JSON so it survives a read/write cycle untouched.
struct ExtraField {
  std::string name;
  std::string json;

  bool operator==(const ExtraField&) const = default;
};

struct HttpExchange {
  uint64_t exchange_id = 0;
  double timestamp = 0.0;  // seconds since scenario epoch
  std::string flow_id;
  std::optional<std::string> ground_truth_client;  // oracle-only
  std::string method = "GET";
  std::string url;
  HeaderList request_headers;
  int response_status = 200;
  HeaderList response_headers;
  std::string response_body;  // raw bytes
  bool is_encrypted = false;
  std::vector<ExtraField> extra_fields;

  bool operator==(const HttpExchange&) const = default;
};

// Media type from the first Content-Type response header: parameters
// stripped, trimmed, lowercased. "unknown" for encrypted exchanges and for
// missing or empty headers.
std::string MimeType(const HttpExchange& exchange);

class MimeDistribution {
 public:
  void Add(std::string_view mime, uint64_t n = 1);

  const std::map<std::string, uint64_t>& counts() const { return counts_; }
  uint64_t total() const { return total_; }
  uint64_t count(std::string_view mime) const;

  // Share of `mime` in [0, 100]; 0 for an empty distribution.
  double Percent(std::string_view mime) const;

  bool operator==(const MimeDistribution&) const = default;

 private:
  std::map<std::string, uint64_t> counts_;
  uint64_t total_ = 0;
};

// Counts every non-encrypted exchange once under MimeType().
MimeDistribution ComputeMimeDistribution(std::span<const HttpExchange> exchanges);

// One request seen by the payload web server that hosts the beacon objects.
struct ObjectFetchRecord {
  double timestamp = 0.0;
  std::string source;
  std::string url;

  bool operator==(const ObjectFetchRecord&) const = default;
};

// Host part of an absolute http(s) URL, lowercased, without port.
std::string UrlHost(std::string_view url);

// Path and query of an absolute URL ("/" when absent).
std::string UrlPathAndQuery(std::string_view url);

std::string ToLowerAscii(std::string_view s);
std::string_view TrimAscii(std::string_view s);
bool EqualsIgnoreCase(std::string_view a, std::string_view b);

}  // namespace tagtrace

#endif  // TAGTRACE_HTTP_MODEL_H_
