#include "tagtrace/ua_vuln.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <unordered_map>
#include <unordered_set>

#include "str_util.h"
#include "jsonl.h"

namespace tagtrace {

namespace {

bool IsDigit(char c) { return c >= '0' && c <= '9'; }
bool IsAlpha(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
}

bool IsNameChar(char c) {
  return IsAlpha(c) || IsDigit(c) || c == '.' || c == '_' || c == '+' ||
         c == '-';
}

bool IsSpace(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; }

bool IsValidName(std::string_view name) {
  if (name.empty() || !IsAlpha(name.front())) return false;
  return std::all_of(name.begin(), name.end(), IsNameChar);
}

// Longest prefix of the form D+(.D+)*; empty if `s` does not start with a
// digit.
std::string_view DottedNumericPrefix(std::string_view s) {
  size_t i = 0;
  while (i < s.size() && IsDigit(s[i])) ++i;
  if (i == 0) return {};
  while (i + 1 < s.size() && s[i] == '.' && IsDigit(s[i + 1])) {
    i += 1;
    while (i < s.size() && IsDigit(s[i])) ++i;
  }
  return s.substr(0, i);
}

std::string_view StripPunctuation(std::string_view word) {
  while (!word.empty() && (word.back() == ',' || word.back() == ';')) {
    word.remove_suffix(1);
  }
  while (!word.empty() && (word.front() == ',' || word.front() == ';')) {
    word.remove_prefix(1);
  }
  return word;
}

std::vector<std::string_view> SplitWhitespace(std::string_view s) {
  std::vector<std::string_view> words;
  size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && IsSpace(s[i])) ++i;
    size_t start = i;
    while (i < s.size() && !IsSpace(s[i])) ++i;
    if (i > start) words.push_back(s.substr(start, i - start));
  }
  return words;
}

// "Name/Version". With `require_version`, a token without a numeric version
// is rejected.
std::optional<ProductToken> ParseSlashToken(std::string_view word,
                                            bool require_version) {
  size_t slash = word.find('/');
  std::string_view name = word.substr(0, slash);
  if (!IsValidName(name)) return std::nullopt;
  ProductToken token{ToLowerAscii(name), std::nullopt};
  if (slash != std::string_view::npos) {
    std::string_view version = DottedNumericPrefix(word.substr(slash + 1));
    if (!version.empty()) token.version = std::string(version);
  }
  if (require_version && !token.version) return std::nullopt;
  return token;
}

void ParseComment(std::string_view comment, std::vector<ProductToken>& out) {
  size_t start = 0;
  while (start <= comment.size()) {
    size_t end = comment.find(';', start);
    if (end == std::string_view::npos) end = comment.size();
    std::string_view component = TrimAscii(comment.substr(start, end - start));
    start = end + 1;
    if (component.empty()) continue;

    if (component.find('/') != std::string_view::npos) {
      std::vector<std::string_view> words = SplitWhitespace(component);
      for (std::string_view w : words) {
        if (auto token = ParseSlashToken(StripPunctuation(w), true)) {
          out.push_back(*std::move(token));
        }
      }
      continue;
    }

    std::vector<std::string_view> words = SplitWhitespace(component);
    if (words.size() < 2) continue;
    std::string_view version = DottedNumericPrefix(words.back());
    if (version.empty()) continue;
    std::string name;
    bool ok = true;
    for (size_t i = 0; i + 1 < words.size(); ++i) {
      if (!IsValidName(words[i])) {
        ok = false;
        break;
      }
      if (!name.empty()) name += ' ';
      name += ToLowerAscii(words[i]);
    }
    if (ok) out.push_back({std::move(name), std::string(version)});
  }
}

int CompareDigitStrings(std::string_view a, std::string_view b) {
  while (a.size() > 1 && a.front() == '0') a.remove_prefix(1);
  while (b.size() > 1 && b.front() == '0') b.remove_prefix(1);
  if (a.size() != b.size()) return a.size() < b.size() ? -1 : 1;
  int c = a.compare(b);
  return c < 0 ? -1 : (c > 0 ? 1 : 0);
}

int CompareComponent(std::string_view a, std::string_view b) {
  size_t ia = 0;
  while (ia < a.size() && IsDigit(a[ia])) ++ia;
  size_t ib = 0;
  while (ib < b.size() && IsDigit(b[ib])) ++ib;
  std::string_view na = ia == 0 ? std::string_view("0") : a.substr(0, ia);
  std::string_view nb = ib == 0 ? std::string_view("0") : b.substr(0, ib);
  if (int c = CompareDigitStrings(na, nb); c != 0) return c;
  int c = a.substr(ia).compare(b.substr(ib));
  return c < 0 ? -1 : (c > 0 ? 1 : 0);
}

std::vector<std::string_view> SplitDots(std::string_view v) {
  std::vector<std::string_view> parts;
  size_t start = 0;
  while (true) {
    size_t dot = v.find('.', start);
    parts.push_back(v.substr(start, dot == std::string_view::npos
                                        ? std::string_view::npos
                                        : dot - start));
    if (dot == std::string_view::npos) break;
    start = dot + 1;
  }
  return parts;
}

int64_t WindowIndex(double t, double w) {
  return static_cast<int64_t>(std::floor(t / w));
}

}  // namespace

std::vector<ProductToken> ParseUserAgent(std::string_view raw) {
  std::vector<ProductToken> tokens;
  std::string outside;
  size_t i = 0;
  while (i < raw.size()) {
    if (raw[i] == '(') {
      int depth = 1;
      size_t start = i + 1;
      size_t j = start;
      while (j < raw.size() && depth > 0) {
        if (raw[j] == '(') ++depth;
        if (raw[j] == ')') --depth;
        ++j;
      }
      size_t end = depth == 0 ? j - 1 : raw.size();
      // Flush the words collected so far to keep order of appearance.
      for (std::string_view w : SplitWhitespace(outside)) {
        if (auto t = ParseSlashToken(StripPunctuation(w), false)) {
          tokens.push_back(*std::move(t));
        }
      }
      outside.clear();
      ParseComment(raw.substr(start, end - start), tokens);
      i = j;
      continue;
    }
    outside += raw[i];
    ++i;
  }
  for (std::string_view w : SplitWhitespace(outside)) {
    if (auto t = ParseSlashToken(StripPunctuation(w), false)) {
      tokens.push_back(*std::move(t));
    }
  }
  return tokens;
}

int CompareVersions(std::string_view a, std::string_view b) {
  std::vector<std::string_view> pa = SplitDots(a);
  std::vector<std::string_view> pb = SplitDots(b);
  size_t n = std::max(pa.size(), pb.size());
  for (size_t i = 0; i < n; ++i) {
    std::string_view ca = i < pa.size() ? pa[i] : std::string_view("0");
    std::string_view cb = i < pb.size() ? pb[i] : std::string_view("0");
    if (int c = CompareComponent(ca, cb); c != 0) return c;
  }
  return 0;
}

bool VersionRange::Contains(std::string_view version) const {
  if (min && CompareVersions(version, *min) < 0) return false;
  if (max && CompareVersions(version, *max) > 0) return false;
  return true;
}

absl::Status VulnDb::Add(std::string_view product, VersionRange range) {
  std::string name = ToLowerAscii(TrimAscii(product));
  if (name.empty()) return absl::InvalidArgumentError("empty product name");
  if (range.min && range.max && CompareVersions(*range.min, *range.max) > 0) {
    return absl::InvalidArgumentError(internal::Cat(
        "range for '", name, "' has min ", *range.min, " > max ", *range.max));
  }
  entries_.push_back({std::move(name), std::move(range)});
  return absl::OkStatus();
}

bool VulnDb::Matches(const ProductToken& token) const {
  if (!token.version) return false;
  for (const VulnEntry& e : entries_) {
    if (e.product == token.name && e.range.Contains(*token.version)) {
      return true;
    }
  }
  return false;
}

absl::StatusOr<VulnDb> ParseVulnDb(std::string_view text) {
  VulnDb db;
  bool header_seen = false;
  size_t line_no = 0;
  size_t pos = 0;
  while (pos < text.size()) {
    size_t nl = text.find('\n', pos);
    std::string_view line =
        text.substr(pos, nl == std::string_view::npos ? text.npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() : nl + 1;
    ++line_no;
    line = TrimAscii(line);
    if (line.empty() || line.front() == '#') continue;
    if (!header_seen) {
      header_seen = true;
      continue;
    }
    std::vector<std::string_view> fields;
    size_t start = 0;
    while (true) {
      size_t comma = line.find(',', start);
      fields.push_back(TrimAscii(line.substr(
          start, comma == std::string_view::npos ? line.npos : comma - start)));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (fields.size() != 3) {
      return absl::InvalidArgumentError(internal::Cat(
          "line ", line_no, ": expected 3 fields, got ", fields.size()));
    }
    VersionRange range;
    if (!fields[1].empty()) range.min = std::string(fields[1]);
    if (!fields[2].empty()) range.max = std::string(fields[2]);
    if (absl::Status s = db.Add(fields[0], std::move(range)); !s.ok()) {
      return absl::InvalidArgumentError(
          internal::Cat("line ", line_no, ": ", s.message()));
    }
  }
  return db;
}

absl::StatusOr<VulnDb> LoadVulnDb(const std::string& path) {
  std::string text;
  if (absl::Status s = internal::ReadWholeFile(path, &text); !s.ok()) return s;
  absl::StatusOr<VulnDb> db = ParseVulnDb(text);
  if (!db.ok()) {
    return absl::InvalidArgumentError(
        internal::Cat(path, ": ", db.status().message()));
  }
  return db;
}

std::string FormatVulnDb(const VulnDb& db) {
  std::string out = "product,min_version,max_version\n";
  for (const VulnEntry& e : db.entries()) {
    internal::Append(&out, e.product, ",", e.range.min.value_or(""), ",",
                    e.range.max.value_or(""), "\n");
  }
  return out;
}

std::string_view VerdictName(Verdict v) {
  return v == Verdict::kVulnerable ? "vulnerable" : "not_vulnerable";
}

std::string_view ReasonName(Reason r) {
  switch (r) {
    case Reason::kMatchedEntry:
      return "matched_entry";
    case Reason::kMissingAgent:
      return "missing_agent";
    case Reason::kNoVersion:
      return "no_version";
    case Reason::kNoDbMatch:
      return "no_db_match";
  }
  return "unknown";
}

UaClassification Classify(std::string_view raw, const VulnDb& db) {
  if (raw.empty()) return {Verdict::kNotVulnerable, Reason::kMissingAgent};
  std::vector<ProductToken> tokens = ParseUserAgent(raw);
  bool any_version = false;
  for (const ProductToken& t : tokens) {
    if (!t.version) continue;
    any_version = true;
    if (db.Matches(t)) return {Verdict::kVulnerable, Reason::kMatchedEntry};
  }
  if (!any_version) return {Verdict::kNotVulnerable, Reason::kNoVersion};
  return {Verdict::kNotVulnerable, Reason::kNoDbMatch};
}

absl::StatusOr<double> VulnerabilityRatio(uint64_t vulnerable,
                                          uint64_t not_vulnerable) {
  uint64_t n = vulnerable + not_vulnerable;
  if (n == 0) {
    return absl::FailedPreconditionError(
        "vulnerability ratio is undefined for an empty population");
  }
  return static_cast<double>(vulnerable) / static_cast<double>(n);
}

std::vector<UaRecord> CollectUaRecords(std::span<const UaObservation> uas) {
  std::unordered_map<std::string_view, size_t> index;
  std::vector<UaRecord> records;
  for (const UaObservation& o : uas) {
    auto [it, inserted] = index.try_emplace(o.raw, records.size());
    if (inserted) {
      records.push_back({o.raw, o.timestamp, ParseUserAgent(o.raw)});
    } else {
      UaRecord& r = records[it->second];
      r.first_seen = std::min(r.first_seen, o.timestamp);
    }
  }
  std::stable_sort(records.begin(), records.end(),
                   [](const UaRecord& a, const UaRecord& b) {
                     return a.first_seen < b.first_seen;
                   });
  return records;
}

std::vector<UaObservation> ObservationsFromExchanges(
    std::span<const HttpExchange> exchanges) {
  std::vector<UaObservation> out;
  out.reserve(exchanges.size());
  for (const HttpExchange& x : exchanges) {
    if (x.is_encrypted) continue;
    auto ua = FindHeader(x.request_headers, "User-Agent");
    out.push_back({x.timestamp, ua ? std::string(*ua) : std::string()});
  }
  return out;
}

absl::StatusOr<RatioSeries> ComputeRatioSeries(
    std::span<const UaObservation> uas, const VulnDb& db,
    double window_seconds) {
  if (!(window_seconds > 0)) {
    return absl::InvalidArgumentError("window_seconds must be positive");
  }
  RatioSeries series;
  series.window_seconds = window_seconds;
  if (uas.empty()) return series;

  int64_t first = WindowIndex(uas.front().timestamp, window_seconds);
  int64_t last = first;
  for (const UaObservation& o : uas) {
    int64_t k = WindowIndex(o.timestamp, window_seconds);
    first = std::min(first, k);
    last = std::max(last, k);
  }

  std::vector<std::unordered_set<std::string_view>> seen(
      static_cast<size_t>(last - first + 1));
  for (const UaObservation& o : uas) {
    seen[static_cast<size_t>(WindowIndex(o.timestamp, window_seconds) - first)]
        .insert(o.raw);
  }

  std::unordered_map<std::string_view, bool> verdicts;
  for (size_t i = 0; i < seen.size(); ++i) {
    RatioPoint p;
    p.window_start =
        static_cast<double>(first + static_cast<int64_t>(i)) * window_seconds;
    for (std::string_view raw : seen[i]) {
      auto it = verdicts.find(raw);
      if (it == verdicts.end()) {
        bool vulnerable = Classify(raw, db).verdict == Verdict::kVulnerable;
        it = verdicts.emplace(raw, vulnerable).first;
      }
      ++(it->second ? p.vulnerable : p.not_vulnerable);
    }
    if (absl::StatusOr<double> r =
            VulnerabilityRatio(p.vulnerable, p.not_vulnerable);
        r.ok()) {
      p.ratio = *r;
    }
    series.points.push_back(p);
  }
  return series;
}

absl::StatusOr<std::vector<GrowthPoint>> UniqueUaGrowth(
    std::span<const UaObservation> uas, double window_seconds) {
  if (!(window_seconds > 0)) {
    return absl::InvalidArgumentError("window_seconds must be positive");
  }
  std::vector<GrowthPoint> growth;
  if (uas.empty()) return growth;

  std::unordered_map<std::string_view, int64_t> first_window;
  int64_t first = WindowIndex(uas.front().timestamp, window_seconds);
  int64_t last = first;
  for (const UaObservation& o : uas) {
    int64_t k = WindowIndex(o.timestamp, window_seconds);
    first = std::min(first, k);
    last = std::max(last, k);
    auto [it, inserted] = first_window.try_emplace(o.raw, k);
    if (!inserted) it->second = std::min(it->second, k);
  }
  std::vector<uint64_t> new_in_window(static_cast<size_t>(last - first + 1));
  for (const auto& [raw, k] : first_window) {
    ++new_in_window[static_cast<size_t>(k - first)];
  }
  uint64_t running = 0;
  for (size_t i = 0; i < new_in_window.size(); ++i) {
    running += new_in_window[i];
    growth.push_back(
        {static_cast<double>(first + static_cast<int64_t>(i)) * window_seconds,
         running});
  }
  return growth;
}

absl::StatusOr<std::vector<UaObservation>> ReadUaLog(const std::string& path) {
  std::vector<UaObservation> out;
  absl::Status s =
      internal::ForEachJsonLine(path, [&](const internal::Json& j) {
        if (absl::Status st = internal::RequireObject(j); !st.ok()) return st;
        UaObservation o;
        absl::Status st = internal::GetDouble(j, "timestamp", &o.timestamp);
        if (st.ok()) st = internal::GetString(j, "raw", &o.raw);
        if (!st.ok()) return st;
        out.push_back(std::move(o));
        return absl::OkStatus();
      });
  if (!s.ok()) return s;
  return out;
}

absl::Status WriteUaLog(std::span<const UaObservation> uas,
                        const std::string& path) {
  internal::JsonLineWriter writer(path);
  for (const UaObservation& o : uas) {
    internal::Json j = internal::Json::object();
    j["timestamp"] = o.timestamp;
    j["raw"] = o.raw;
    writer.Add(j);
  }
  return writer.Finish();
}

std::string FormatRatioCsv(const RatioSeries& series) {
  std::string out = "window_start,vulnerable,not_vulnerable,ratio\n";
  for (const RatioPoint& p : series.points) {
    internal::Append(&out, p.window_start, ",", p.vulnerable, ",",
                    p.not_vulnerable, ",");
    if (p.ratio) internal::Append(&out, *p.ratio);
    out += '\n';
  }
  return out;
}

std::string FormatGrowthCsv(std::span<const GrowthPoint> growth) {
  std::string out = "window_start,cumulative_unique\n";
  for (const GrowthPoint& g : growth) {
    internal::Append(&out, g.window_start, ",", g.cumulative_unique, "\n");
  }
  return out;
}

}  // namespace tagtrace
