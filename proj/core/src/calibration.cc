#include "tagtrace/calibration.h"

#include <array>
#include <cmath>
#include <random>

#include "str_util.h"

namespace tagtrace {

namespace {

enum Category { kVulnerable, kVersionless, kNoMatch, kMissing, kCategories };

std::string VulnerableAgent(uint32_t i, std::mt19937_64& rng) {
  uint32_t minor = static_cast<uint32_t>(rng() % 11);  // 3.0.0 .. 3.0.10
  switch (i % 3) {
    case 0:
      return internal::Cat(
          "Mozilla/5.0 (Windows; U; Windows NT 5.1; en-US; rv:1.9.0.", minor,
          ") Gecko/", 2008060000 + i, " Firefox/3.0.", minor);
    case 1:
      return internal::Cat(
          "Mozilla/4.0 (compatible; MSIE ", 6 + rng() % 2,
          ".0; Windows NT 5.1; .NET CLR 2.0.", 50000 + i, ")");
    default:
      return internal::Cat("Opera/9.", 20 + rng() % 45,
                          " (X11; Linux i686; U; en) Presto/2.1.", i);
  }
}

std::string NoMatchAgent(uint32_t i, std::mt19937_64& rng) {
  switch (i % 4) {
    case 0:
      return internal::Cat(
          "Mozilla/5.0 (X11; U; Linux x86_64; en-US; rv:1.9.1.", rng() % 9,
          ") Gecko/", 2009070000 + i, " Firefox/3.5.", rng() % 9);
    case 1:
      return internal::Cat(
          "Mozilla/5.0 (Windows; U; Windows NT 6.0; en-US) AppleWebKit/530.",
          i, " (KHTML, like Gecko) Chrome/2.0.172.", rng() % 40,
          " Safari/530.", i);
    case 2:
      return internal::Cat(
          "Mozilla/5.0 (Macintosh; U; Intel Mac OS X 10_5_7; en-us) "
          "AppleWebKit/525.",
          i, " (KHTML, like Gecko) Version/4.0 Safari/525.", i);
    default:
      return internal::Cat("Wget/1.11.", i);
  }
}

std::string VersionlessAgent(uint32_t i) {
  if (i % 2 == 0) return internal::Cat("LinkChecker-", i);
  return internal::Cat("Mozilla (compatible; crawler-", i, ")");
}

}  // namespace

std::vector<UaPopulationEntry> CalibratedUaPopulation(uint32_t clients,
                                                      uint64_t seed) {
  const double rest = 1.0 - kMissingAgentShare;
  const double named = kReferenceVulnerableStrings +
                       kReferenceVersionlessStrings + kReferenceNoMatchStrings;
  const std::array<double, kCategories> share = {
      rest * kReferenceVulnerableStrings / named,
      rest * kReferenceVersionlessStrings / named,
      rest * kReferenceNoMatchStrings / named, kMissingAgentShare};

  std::mt19937_64 rng(seed ^ 0x5eed0f0a9e17ULL);
  std::array<uint32_t, kCategories> taken{};
  std::vector<UaPopulationEntry> out;
  out.reserve(clients);
  for (uint32_t i = 0; i < clients; ++i) {
    // Pick the category furthest behind its quota for the prefix [0, i].
    int best = 0;
    double best_deficit = -1e300;
    for (int c = 0; c < kCategories; ++c) {
      double deficit = share[c] * (i + 1) - taken[c];
      if (deficit > best_deficit) {
        best_deficit = deficit;
        best = c;
      }
    }
    ++taken[best];
    UaPopulationEntry e;
    switch (best) {
      case kVulnerable:
        e.raw = VulnerableAgent(i, rng);
        e.vulnerable = true;
        break;
      case kVersionless:
        e.raw = VersionlessAgent(i);
        break;
      case kNoMatch:
        e.raw = NoMatchAgent(i, rng);
        break;
      default:
        break;  // no User-Agent header
    }
    out.push_back(std::move(e));
  }
  return out;
}

VulnDb CalibratedVulnDb() {
  VulnDb db;
  (void)db.Add("firefox", {std::nullopt, "3.0.10"});
  (void)db.Add("msie", {std::nullopt, "7.0"});
  (void)db.Add("opera", {"9.0", "9.64"});
  (void)db.Add("safari", {std::nullopt, "3.2.1"});
  (void)db.Add("seamonkey", {std::nullopt, "1.1.16"});
  return db;
}

MimeMix ReferenceMimeMix() {
  MimeMix mix = {
      {"text/html", 33},
      {"image/jpeg", 24},
      {"image/gif", 16},
      {"image/png", 6},
      {"text/plain", 5},
      {"application/x-javascript", 4},
      {"text/css", 3},
      {"text/javascript", 3},
      {"text/xml", 2},
      {"application/octet-stream", 2},
      {"application/pdf", 2},
      {"application/x-shockwave-flash", 2},
  };
  double total = 0;
  for (const auto& [mime, share] : mix) total += share;
  for (auto& [mime, share] : mix) share /= total;
  return mix;
}

ScenarioConfig ReferenceScenario() {
  ScenarioConfig c;
  c.client_count = 300;
  c.duration_seconds = 6 * 3600.0;
  c.visit_rate = 1.0 / 120.0;
  c.mime_mix = ReferenceMimeMix();
  c.http_share = 0.96;
  c.ua_population = CalibratedUaPopulation(c.client_count, c.seed);
  c.non_fetching_share = 0.1;
  c.initial_online_share = 0.35;
  c.html_without_body_share = 0.05;
  c.restarts = {{7, 3600.0}, {41, 7200.0}, {99, 12600.0}};
  c.mode = ProxyMode::kActive;
  return c;
}

}  // namespace tagtrace
