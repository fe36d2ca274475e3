#include "tagtrace/http_model.h"

#include <algorithm>
#include <cctype>

namespace tagtrace {

std::string ToLowerAscii(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

std::string_view TrimAscii(std::string_view s) {
  auto is_space = [](char c) {
    return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\f' ||
           c == '\v';
  };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

bool EqualsIgnoreCase(std::string_view a, std::string_view b) {
  return a.size() == b.size() &&
         std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
           return std::tolower(static_cast<unsigned char>(x)) ==
                  std::tolower(static_cast<unsigned char>(y));
         });
}

std::optional<std::string_view> FindHeader(const HeaderList& headers,
                                           std::string_view name) {
  for (const Header& h : headers) {
    if (EqualsIgnoreCase(h.name, name)) return std::string_view(h.value);
  }
  return std::nullopt;
}

void SetHeader(HeaderList& headers, std::string_view name,
               std::string_view value) {
  bool seen = false;
  auto it = headers.begin();
  while (it != headers.end()) {
    if (EqualsIgnoreCase(it->name, name)) {
      if (seen) {
        it = headers.erase(it);
        continue;
      }
      it->value = std::string(value);
      seen = true;
    }
    ++it;
  }
  if (!seen) headers.push_back({std::string(name), std::string(value)});
}

void RemoveHeader(HeaderList& headers, std::string_view name) {
  std::erase_if(headers,
                [&](const Header& h) { return EqualsIgnoreCase(h.name, name); });
}

std::string MimeType(const HttpExchange& exchange) {
  if (exchange.is_encrypted) return std::string(kUnknownMime);
  auto content_type = FindHeader(exchange.response_headers, "Content-Type");
  if (!content_type) return std::string(kUnknownMime);
  std::string_view value = *content_type;
  value = value.substr(0, value.find(';'));
  value = TrimAscii(value);
  if (value.empty()) return std::string(kUnknownMime);
  return ToLowerAscii(value);
}

void MimeDistribution::Add(std::string_view mime, uint64_t n) {
  counts_[std::string(mime)] += n;
  total_ += n;
}

uint64_t MimeDistribution::count(std::string_view mime) const {
  auto it = counts_.find(std::string(mime));
  return it == counts_.end() ? 0 : it->second;
}

double MimeDistribution::Percent(std::string_view mime) const {
  if (total_ == 0) return 0.0;
  return 100.0 * static_cast<double>(count(mime)) /
         static_cast<double>(total_);
}

MimeDistribution ComputeMimeDistribution(
    std::span<const HttpExchange> exchanges) {
  MimeDistribution dist;
  for (const HttpExchange& x : exchanges) {
    if (x.is_encrypted) continue;
    dist.Add(MimeType(x));
  }
  return dist;
}

namespace {

// Strips "scheme://" and returns the authority + rest.
std::string_view AfterScheme(std::string_view url) {
  size_t pos = url.find("://");
  return pos == std::string_view::npos ? url : url.substr(pos + 3);
}

}  // namespace

std::string UrlHost(std::string_view url) {
  std::string_view rest = AfterScheme(url);
  std::string_view authority = rest.substr(0, rest.find_first_of("/?#"));
  size_t at = authority.rfind('@');
  if (at != std::string_view::npos) authority.remove_prefix(at + 1);
  if (!authority.empty() && authority.front() == '[') {
    size_t close = authority.find(']');
    return ToLowerAscii(authority.substr(0, close + 1));
  }
  return ToLowerAscii(authority.substr(0, authority.find(':')));
}

std::string UrlPathAndQuery(std::string_view url) {
  std::string_view rest = AfterScheme(url);
  size_t slash = rest.find_first_of("/?");
  if (slash == std::string_view::npos) return "/";
  std::string out(rest.substr(slash));
  size_t hash = out.find('#');
  if (hash != std::string::npos) out.resize(hash);
  if (out.empty() || out.front() == '?') out.insert(out.begin(), '/');
  return out;
}

}  // namespace tagtrace
