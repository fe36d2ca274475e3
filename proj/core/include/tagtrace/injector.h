// Beacon-tag injection into HTML responses.
//
// Every taggable response gets one static and one dynamic 1x1 hidden image,
// wrapped in a pair of comment sentinels and placed immediately before the
// closing body tag. The static image lives under a fixed label so a browser
// resolves it once per lifetime; the dynamic image lives under a label that is
// never reused, so each tagged page forces its own DNS lookup.
//
// The sentinels make injection idempotent (a marked page is never tagged
// again) and reversible (StripInjectedBeacons restores the original body).

#ifndef TAGTRACE_INJECTOR_H_
#define TAGTRACE_INJECTOR_H_

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "tagtrace/http_model.h"

namespace tagtrace {

enum class TagKind { kStatic, kDynamic };

std::string_view TagKindName(TagKind kind);

struct Tag {
  TagKind kind = TagKind::kStatic;
  std::string subdomain;  // single DNS label
  std::string url;
  uint64_t exchange_id = 0;
  double injected_at = 0.0;

  bool operator==(const Tag&) const = default;
};

struct InjectorConfig {
  std::string zone = "beacon.test";
  std::string static_label = "static";
  std::string object_name = "pixel.gif";
  uint64_t seed = 0x7a6b5c4d3e2f1a0bULL;
};

// Checks that the zone is a valid domain and that static_label is a valid
// label that cannot collide with a generated dynamic label.
absl::Status ValidateInjectorConfig(const InjectorConfig& config);

// Opening sentinel for `zone`. A body containing it is never tagged again.
std::string BeaconMarker(std::string_view zone);
std::string BeaconEndMarker(std::string_view zone);

// Label for the n-th dynamic tag of a lineage seeded with `seed`: 'd' followed
// by 13 base-36 digits of a bijective 64-bit mix of (n, seed). Distinct n give
// distinct labels.
std::string DynamicLabel(uint64_t counter, uint64_t seed);

// Not thread-safe; confine an Injector to one task or guard it externally.
class Injector {
 public:
  explicit Injector(InjectorConfig config);

  struct Result {
    HttpExchange exchange;
    std::vector<Tag> tags;  // empty when the exchange was passed through
  };

  // True for a plaintext text/html response without Content-Encoding whose
  // body has a body element and does not already carry this zone's marker.
  bool IsTaggable(const HttpExchange& exchange) const;

  // Rewrites a taggable exchange; returns anything else byte-identical.
  Result Inject(const HttpExchange& exchange);

  // Draws the next dynamic label and advances the counter.
  std::string GenerateSubdomain();

  std::string TagUrl(std::string_view label) const;

  const InjectorConfig& config() const { return config_; }
  uint64_t counter() const { return counter_; }
  const std::vector<Tag>& issued() const { return issued_; }

 private:
  std::string BeaconBlock(std::string_view static_url,
                          std::string_view dynamic_url) const;

  InjectorConfig config_;
  std::string marker_;
  std::string end_marker_;
  uint64_t counter_ = 0;
  std::vector<Tag> issued_;
};

// Position of the last closing body tag, or npos. Case-insensitive and
// tolerant of whitespace before '>'.
size_t FindClosingBodyTag(std::string_view html);

// True when `html` has an opening body element.
bool HasBodyElement(std::string_view html);

// Removes every sentinel-wrapped beacon block for `zone`.
std::string StripInjectedBeacons(std::string_view body, std::string_view zone);

// Tag issue log, line-delimited JSON with the Tag field names.
absl::StatusOr<std::vector<Tag>> ReadTagLog(const std::string& path);
absl::Status WriteTagLog(std::span<const Tag> tags, const std::string& path);
std::string SerializeTag(const Tag& tag);

}  // namespace tagtrace

#endif  // TAGTRACE_INJECTOR_H_
