#include "tagtrace/injector.h"

#include <cctype>

#include "str_util.h"
#include "jsonl.h"
#include "tagtrace/dns_sim.h"

namespace tagtrace {

namespace {

constexpr size_t kDynamicDigits = 13;

uint64_t Mix64(uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

char LowerAt(std::string_view s, size_t i) {
  return static_cast<char>(std::tolower(static_cast<unsigned char>(s[i])));
}

bool MatchesAt(std::string_view haystack, size_t pos, std::string_view lower) {
  if (pos + lower.size() > haystack.size()) return false;
  for (size_t i = 0; i < lower.size(); ++i) {
    if (LowerAt(haystack, pos + i) != lower[i]) return false;
  }
  return true;
}

bool IsHtmlSpace(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f';
}

bool LooksLikeDynamicLabel(std::string_view label) {
  if (label.size() != kDynamicDigits + 1 || label.front() != 'd') return false;
  for (char c : label.substr(1)) {
    if (!((c >= '0' && c <= '9') || (c >= 'a' && c <= 'z'))) return false;
  }
  return true;
}

}  // namespace

std::string_view TagKindName(TagKind kind) {
  return kind == TagKind::kStatic ? "static" : "dynamic";
}

absl::Status ValidateInjectorConfig(const InjectorConfig& config) {
  if (!IsValidDomainName(config.zone)) {
    return absl::InvalidArgumentError(
        internal::Cat("invalid zone '", config.zone, "'"));
  }
  if (!IsValidDnsLabel(config.static_label)) {
    return absl::InvalidArgumentError(
        internal::Cat("invalid static label '", config.static_label, "'"));
  }
  if (LooksLikeDynamicLabel(ToLowerAscii(config.static_label))) {
    return absl::InvalidArgumentError(
        "static label has the shape of a dynamic label");
  }
  if (config.object_name.empty() ||
      config.object_name.find_first_of("/?#\" <>") != std::string::npos) {
    return absl::InvalidArgumentError("invalid beacon object name");
  }
  return absl::OkStatus();
}

std::string BeaconMarker(std::string_view zone) {
  return internal::Cat("<!--beacon zone=", zone, "-->");
}

std::string BeaconEndMarker(std::string_view zone) {
  return internal::Cat("<!--/beacon zone=", zone, "-->");
}

std::string DynamicLabel(uint64_t counter, uint64_t seed) {
  uint64_t value = Mix64(counter ^ Mix64(seed));
  std::string label(kDynamicDigits + 1, '0');
  label[0] = 'd';
  static constexpr char kDigits[] = "0123456789abcdefghijklmnopqrstuvwxyz";
  for (size_t i = kDynamicDigits; i >= 1; --i) {
    label[i] = kDigits[value % 36];
    value /= 36;
  }
  return label;
}

size_t FindClosingBodyTag(std::string_view html) {
  size_t found = std::string_view::npos;
  for (size_t pos = html.find("</"); pos != std::string_view::npos;
       pos = html.find("</", pos + 2)) {
    if (!MatchesAt(html, pos, "</body")) continue;
    size_t i = pos + 6;
    while (i < html.size() && IsHtmlSpace(html[i])) ++i;
    if (i < html.size() && html[i] == '>') found = pos;
  }
  return found;
}

bool HasBodyElement(std::string_view html) {
  for (size_t pos = html.find('<'); pos != std::string_view::npos;
       pos = html.find('<', pos + 1)) {
    if (!MatchesAt(html, pos, "<body")) continue;
    size_t next = pos + 5;
    if (next == html.size()) return false;
    char c = html[next];
    if (c == '>' || c == '/' || IsHtmlSpace(c)) return true;
  }
  return false;
}

std::string StripInjectedBeacons(std::string_view body, std::string_view zone) {
  const std::string begin = BeaconMarker(zone);
  const std::string end = BeaconEndMarker(zone);
  std::string out(body);
  size_t pos = 0;
  while ((pos = out.find(begin, pos)) != std::string::npos) {
    size_t close = out.find(end, pos + begin.size());
    if (close == std::string::npos) break;
    out.erase(pos, close + end.size() - pos);
  }
  return out;
}

namespace {

InjectorConfig Normalized(InjectorConfig config) {
  config.zone = ToLowerAscii(config.zone);
  config.static_label = ToLowerAscii(config.static_label);
  return config;
}

}  // namespace

Injector::Injector(InjectorConfig config)
    : config_(Normalized(std::move(config))),
      marker_(BeaconMarker(config_.zone)),
      end_marker_(BeaconEndMarker(config_.zone)) {}

bool Injector::IsTaggable(const HttpExchange& exchange) const {
  if (exchange.is_encrypted) return false;
  if (MimeType(exchange) != "text/html") return false;
  if (auto encoding = FindHeader(exchange.response_headers, "Content-Encoding");
      encoding && !TrimAscii(*encoding).empty() &&
      !EqualsIgnoreCase(TrimAscii(*encoding), "identity")) {
    return false;
  }
  const std::string& body = exchange.response_body;
  if (body.find(marker_) != std::string::npos) return false;
  return HasBodyElement(body);
}

std::string Injector::GenerateSubdomain() {
  return DynamicLabel(counter_++, config_.seed);
}

std::string Injector::TagUrl(std::string_view label) const {
  return internal::Cat("http://", label, ".", config_.zone, "/",
                      config_.object_name);
}

std::string Injector::BeaconBlock(std::string_view static_url,
                                  std::string_view dynamic_url) const {
  auto image = [](std::string_view url) {
    return internal::Cat("<img src=\"", url,
                        "\" width=\"1\" height=\"1\" alt=\"\" "
                        "style=\"display:none;visibility:hidden\">");
  };
  return internal::Cat(marker_, image(static_url), image(dynamic_url),
                      end_marker_);
}

Injector::Result Injector::Inject(const HttpExchange& exchange) {
  Result result{exchange, {}};
  if (!IsTaggable(exchange)) return result;

  const std::string& static_label = config_.static_label;
  const std::string dynamic_label = GenerateSubdomain();
  Tag static_tag{TagKind::kStatic, static_label, TagUrl(static_label),
                 exchange.exchange_id, exchange.timestamp};
  Tag dynamic_tag{TagKind::kDynamic, dynamic_label, TagUrl(dynamic_label),
                  exchange.exchange_id, exchange.timestamp};

  std::string& body = result.exchange.response_body;
  size_t at = FindClosingBodyTag(body);
  if (at == std::string::npos) at = body.size();
  body.insert(at, BeaconBlock(static_tag.url, dynamic_tag.url));
  SetHeader(result.exchange.response_headers, "Content-Length",
            std::to_string(body.size()));

  issued_.push_back(static_tag);
  issued_.push_back(dynamic_tag);
  result.tags = {std::move(static_tag), std::move(dynamic_tag)};
  return result;
}

namespace {

internal::Json TagToJson(const Tag& tag) {
  internal::Json j = internal::Json::object();
  j["kind"] = TagKindName(tag.kind);
  j["subdomain"] = tag.subdomain;
  j["url"] = tag.url;
  j["exchange_id"] = tag.exchange_id;
  j["injected_at"] = tag.injected_at;
  return j;
}

}  // namespace

std::string SerializeTag(const Tag& tag) {
  return internal::DumpCompact(TagToJson(tag));
}

absl::StatusOr<std::vector<Tag>> ReadTagLog(const std::string& path) {
  std::vector<Tag> out;
  absl::Status s =
      internal::ForEachJsonLine(path, [&](const internal::Json& j) {
        if (absl::Status st = internal::RequireObject(j); !st.ok()) return st;
        Tag tag;
        std::string kind;
        absl::Status st = internal::GetString(j, "kind", &kind);
        if (st.ok()) st = internal::GetString(j, "subdomain", &tag.subdomain);
        if (st.ok()) st = internal::GetString(j, "url", &tag.url);
        if (st.ok()) st = internal::GetUint(j, "exchange_id", &tag.exchange_id);
        if (st.ok()) st = internal::GetDouble(j, "injected_at", &tag.injected_at);
        if (!st.ok()) return st;
        if (kind == "static") {
          tag.kind = TagKind::kStatic;
        } else if (kind == "dynamic") {
          tag.kind = TagKind::kDynamic;
        } else {
          return absl::InvalidArgumentError(
              internal::Cat("unknown tag kind '", kind, "'"));
        }
        out.push_back(std::move(tag));
        return absl::OkStatus();
      });
  if (!s.ok()) return s;
  return out;
}

absl::Status WriteTagLog(std::span<const Tag> tags, const std::string& path) {
  internal::JsonLineWriter writer(path);
  for (const Tag& t : tags) writer.Add(TagToJson(t));
  return writer.Finish();
}

}  // namespace tagtrace
