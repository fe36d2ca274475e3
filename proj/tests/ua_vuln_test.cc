#include "tagtrace/ua_vuln.h"

#include <gtest/gtest.h>

#include <map>
#include <random>
#include <set>

#include "tagtrace/calibration.h"
#include "test_support.h"

namespace tagtrace {
namespace {

ProductToken T(std::string name, std::optional<std::string> v) {
  return {std::move(name), std::move(v)};
}

VulnDb FixtureDb() {
  VulnDb db;
  EXPECT_TRUE(db.Add("fixbrowser", {"1.0", "2.0"}).ok());
  EXPECT_TRUE(db.Add("oldie", {std::nullopt, "6.0"}).ok());
  return db;
}

TEST(ParseUserAgentTest, Empty) { EXPECT_TRUE(ParseUserAgent("").empty()); }

TEST(ParseUserAgentTest, HandTracedExample) {
  EXPECT_EQ(ParseUserAgent("ExampleBrowser/2.0 (CoolOS; libfoo 1.2)"),
            (std::vector<ProductToken>{T("examplebrowser", "2.0"),
                                       T("libfoo", "1.2")}));
}

TEST(ParseUserAgentTest, VersionlessToken) {
  EXPECT_EQ(ParseUserAgent("SoloBrowser"),
            (std::vector<ProductToken>{T("solobrowser", std::nullopt)}));
}

TEST(ParseUserAgentTest, RealisticStrings) {
  EXPECT_EQ(
      ParseUserAgent("Mozilla/4.0 (compatible; MSIE 7.0; Windows NT 5.1)"),
      (std::vector<ProductToken>{T("mozilla", "4.0"), T("msie", "7.0"),
                                 T("windows nt", "5.1")}));
  EXPECT_EQ(ParseUserAgent("Opera/9.64 (X11; Linux i686; U; en) Presto/2.1.1"),
            (std::vector<ProductToken>{T("opera", "9.64"),
                                       T("presto", "2.1.1")}));
}

TEST(ParseUserAgentTest, DropsMalformedFragments) {
  // Unbalanced parenthesis, names starting with digits, empty versions.
  auto tokens = ParseUserAgent("A/1 (x; 9lives 2.0; B/) C/ (unterminated; D/3");
  for (const ProductToken& t : tokens) {
    ASSERT_FALSE(t.name.empty());
    EXPECT_TRUE(std::isalpha(static_cast<unsigned char>(t.name[0]))) << t.name;
  }
  EXPECT_EQ(tokens.front(), T("a", "1"));
}

TEST(ParseUserAgentTest, DeterministicAndLowercased) {
  std::mt19937_64 rng(5);
  const std::string alphabet = "AbZ/ .;()0123456789-_";
  for (int i = 0; i < 2000; ++i) {
    std::string raw;
    for (int n = rng() % 40; n > 0; --n) raw += alphabet[rng() % alphabet.size()];
    auto a = ParseUserAgent(raw);
    EXPECT_EQ(a, ParseUserAgent(raw));
    for (const ProductToken& t : a) {
      for (char c : t.name) EXPECT_FALSE(c >= 'A' && c <= 'Z') << raw;
    }
  }
}

TEST(CompareVersionsTest, Basics) {
  EXPECT_EQ(CompareVersions("1.0", "1"), 0);
  EXPECT_EQ(CompareVersions("1.0.0", "1"), 0);
  EXPECT_LT(CompareVersions("1.9", "1.10"), 0);
  EXPECT_GT(CompareVersions("3.0.10", "3.0.9"), 0);
  EXPECT_LT(CompareVersions("2.0b1", "2.0b2"), 0);
  EXPECT_LT(CompareVersions("2.0", "2.0b1"), 0);
  EXPECT_EQ(CompareVersions("007", "7"), 0);
}

TEST(CompareVersionsTest, AntisymmetricAndTransitiveOnSamples) {
  std::vector<std::string> v = {"1", "1.0", "1.2", "1.10", "1.2.3", "2",
                                "2.0a", "2.0b", "10", "9.64", "9.7"};
  for (const auto& a : v) {
    for (const auto& b : v) {
      EXPECT_EQ(CompareVersions(a, b) < 0, CompareVersions(b, a) > 0) << a << " " << b;
      for (const auto& c : v) {
        if (CompareVersions(a, b) <= 0 && CompareVersions(b, c) <= 0) {
          EXPECT_LE(CompareVersions(a, c), 0) << a << " " << b << " " << c;
        }
      }
    }
  }
}

TEST(VulnDbTest, RejectsInvertedRange) {
  VulnDb db;
  EXPECT_FALSE(db.Add("x", {"2.0", "1.0"}).ok());
  EXPECT_TRUE(db.Add("X", {"1.0", "1.0"}).ok());
  EXPECT_EQ(db.entries()[0].product, "x");
}

TEST(VulnDbTest, ParseAndFormatRoundTrip) {
  auto db = ParseVulnDb(
      "product,min_version,max_version\n# comment\nfirefox,,3.0.10\n"
      "Opera,9.0,9.64\n\nmsie,5.0,\n");
  ASSERT_TRUE(db.ok()) << db.status();
  ASSERT_EQ(db->entries().size(), 3u);
  auto again = ParseVulnDb(FormatVulnDb(*db));
  ASSERT_TRUE(again.ok());
  EXPECT_EQ(again->entries(), db->entries());
}

TEST(VulnDbTest, ParseErrorsNameTheLine) {
  auto db = ParseVulnDb("product,min,max\nfirefox,1.0\n");
  ASSERT_FALSE(db.ok());
  EXPECT_NE(std::string(db.status().message()).find("line 2"), std::string::npos);
  EXPECT_FALSE(ParseVulnDb("h\nx,3,1\n").ok());
}

TEST(ClassifyTest, MissingAgent) {
  EXPECT_EQ(Classify("", FixtureDb()),
            (UaClassification{Verdict::kNotVulnerable, Reason::kMissingAgent}));
}

TEST(ClassifyTest, InsideRange) {
  EXPECT_EQ(Classify("FixBrowser/1.5", FixtureDb()),
            (UaClassification{Verdict::kVulnerable, Reason::kMatchedEntry}));
  EXPECT_EQ(Classify("FixBrowser/2.0", FixtureDb()).verdict, Verdict::kVulnerable);
  EXPECT_EQ(Classify("FixBrowser/2.0.1", FixtureDb()).verdict,
            Verdict::kNotVulnerable);
}

TEST(ClassifyTest, VersionedButUnknown) {
  EXPECT_EQ(Classify("OtherBrowser/3.1", FixtureDb()),
            (UaClassification{Verdict::kNotVulnerable, Reason::kNoDbMatch}));
}

TEST(ClassifyTest, NoVersionAnywhere) {
  EXPECT_EQ(Classify("FixBrowser (compatible)", FixtureDb()),
            (UaClassification{Verdict::kNotVulnerable, Reason::kNoVersion}));
}

TEST(ClassifyTest, AnyMatchingTokenWins) {
  EXPECT_EQ(Classify("Other/9.0 (oldie 5.5)", FixtureDb()).verdict,
            Verdict::kVulnerable);
}

TEST(ClassifyTest, VerdictIffMatchedEntry) {
  std::mt19937_64 rng(17);
  const char* names[] = {"FixBrowser", "oldie", "Other", "Plain"};
  for (int i = 0; i < 3000; ++i) {
    std::string ua = names[rng() % 4];
    if (rng() % 3) ua += "/" + std::to_string(rng() % 8) + "." + std::to_string(rng() % 12);
    if (rng() % 2) ua += std::string(" (") + names[rng() % 4] + " " + std::to_string(rng() % 9) + ")";
    UaClassification c = Classify(ua, FixtureDb());
    EXPECT_EQ(c.verdict == Verdict::kVulnerable, c.reason == Reason::kMatchedEntry) << ua;
  }
}

TEST(VulnerabilityRatioTest, Endpoints) {
  EXPECT_DOUBLE_EQ(*VulnerabilityRatio(10, 0), 1.0);
  EXPECT_DOUBLE_EQ(*VulnerabilityRatio(0, 10), 0.0);
  EXPECT_FALSE(VulnerabilityRatio(0, 0).ok());
}

TEST(VulnerabilityRatioTest, ReferenceCounts) {
  EXPECT_NEAR(*VulnerabilityRatio(3106, 4973 - 3106), 0.625, 0.001);
}

TEST(RatioSeriesTest, SingleVulnerable) {
  std::vector<UaObservation> uas = {{10, "FixBrowser/1.5"}};
  auto s = ComputeRatioSeries(uas, FixtureDb());
  ASSERT_TRUE(s.ok());
  ASSERT_EQ(s->points.size(), 1u);
  EXPECT_EQ(s->points[0].ratio, 1.0);
}

TEST(RatioSeriesTest, RejectsBadWindow) {
  EXPECT_FALSE(ComputeRatioSeries({}, FixtureDb(), 0).ok());
  EXPECT_FALSE(UniqueUaGrowth({}, -1).ok());
}

TEST(RatioSeriesTest, EmptyWindowsHaveNoRatio) {
  std::vector<UaObservation> uas = {{0, "FixBrowser/1.5"}, {2000, "Other/1"}};
  auto s = ComputeRatioSeries(uas, FixtureDb(), 900);
  ASSERT_TRUE(s.ok());
  ASSERT_EQ(s->points.size(), 3u);
  EXPECT_FALSE(s->points[1].ratio.has_value());
  EXPECT_EQ(s->points[2].ratio, 0.0);
}

// Brute-force oracle: scan every window, collect distinct strings, classify.
TEST(RatioSeriesTest, MatchesBruteForceOnRandomFixtures) {
  std::mt19937_64 rng(23);
  VulnDb db = FixtureDb();
  const std::vector<std::string> pool = {"FixBrowser/1.1", "FixBrowser/1.9",
                                         "FixBrowser/3.0", "oldie/5",
                                         "Other/2", "Bare", ""};
  for (int round = 0; round < 50; ++round) {
    std::vector<UaObservation> uas;
    for (int n = 1 + rng() % 60; n > 0; --n) {
      uas.push_back({static_cast<double>(rng() % 5000), pool[rng() % pool.size()]});
    }
    auto s = ComputeRatioSeries(uas, db, 600);
    ASSERT_TRUE(s.ok());
    double lo = 1e18, hi = -1;
    for (const auto& o : uas) {
      lo = std::min(lo, o.timestamp);
      hi = std::max(hi, o.timestamp);
    }
    size_t first = static_cast<size_t>(lo / 600), last = static_cast<size_t>(hi / 600);
    ASSERT_EQ(s->points.size(), last - first + 1);
    for (size_t k = first; k <= last; ++k) {
      std::set<std::string> seen;
      for (const auto& o : uas) {
        if (o.timestamp >= k * 600.0 && o.timestamp < (k + 1) * 600.0) seen.insert(o.raw);
      }
      uint64_t v = 0;
      for (const auto& raw : seen) {
        v += Classify(raw, db).verdict == Verdict::kVulnerable;
      }
      const RatioPoint& p = s->points[k - first];
      EXPECT_EQ(p.window_start, k * 600.0);
      EXPECT_EQ(p.vulnerable, v);
      EXPECT_EQ(p.not_vulnerable, seen.size() - v);
      if (seen.empty()) {
        EXPECT_FALSE(p.ratio.has_value());
      } else {
        EXPECT_DOUBLE_EQ(*p.ratio, static_cast<double>(v) / seen.size());
      }
    }
  }
}

TEST(UniqueUaGrowthTest, HandCount) {
  std::vector<UaObservation> uas = {
      {1, "a"}, {2, "b"}, {3, "a"}, {901, "c"}, {902, "b"}};
  auto g = UniqueUaGrowth(uas, 900);
  ASSERT_TRUE(g.ok());
  ASSERT_EQ(g->size(), 2u);
  EXPECT_EQ((*g)[0].cumulative_unique, 2u);
  EXPECT_EQ((*g)[1].cumulative_unique, 3u);
}

TEST(UniqueUaGrowthTest, MonotoneOnRandomInput) {
  std::mt19937_64 rng(31);
  std::vector<UaObservation> uas;
  for (int i = 0; i < 2000; ++i) {
    uas.push_back({static_cast<double>(rng() % 50000), std::to_string(rng() % 300)});
  }
  auto g = UniqueUaGrowth(uas, 900);
  ASSERT_TRUE(g.ok());
  for (size_t i = 1; i < g->size(); ++i) {
    EXPECT_GE((*g)[i].cumulative_unique, (*g)[i - 1].cumulative_unique);
  }
  std::set<std::string> all;
  for (const auto& o : uas) all.insert(o.raw);
  EXPECT_EQ(g->back().cumulative_unique, all.size());
}

TEST(CollectUaRecordsTest, FirstSeenOrder) {
  std::vector<UaObservation> uas = {{5, "b"}, {1, "a"}, {7, "b"}, {3, "c/1"}};
  auto recs = CollectUaRecords(uas);
  ASSERT_EQ(recs.size(), 3u);
  EXPECT_EQ(recs[0].raw, "a");
  EXPECT_EQ(recs[1].raw, "c/1");
  EXPECT_EQ(recs[1].product_tokens, ParseUserAgent("c/1"));
  EXPECT_EQ(recs[2].first_seen, 5);
}

TEST(ObservationsTest, MissingHeaderIsEmptyStringAndEncryptedSkipped) {
  HttpExchange a = testing::HtmlExchange("x", 1);
  HttpExchange b = testing::HtmlExchange("x", 2);
  b.request_headers = {{"Host", "h"}};
  HttpExchange c = testing::HtmlExchange("", 3);
  c.is_encrypted = true;
  auto obs = ObservationsFromExchanges(std::vector<HttpExchange>{a, b, c});
  ASSERT_EQ(obs.size(), 2u);
  EXPECT_EQ(obs[0].raw, "TestBrowser/1.0");
  EXPECT_EQ(obs[1].raw, "");
}

TEST(UaLogTest, RoundTrip) {
  std::vector<UaObservation> uas = {{1.5, "A/1"}, {2, ""}, {3, "q\"uote"}};
  testing::TempDir dir;
  ASSERT_TRUE(WriteUaLog(uas, dir.file("ua.jsonl")).ok());
  auto back = ReadUaLog(dir.file("ua.jsonl"));
  ASSERT_TRUE(back.ok());
  EXPECT_EQ(*back, uas);
}

TEST(CalibratedPopulationTest, CategoriesMatchTheirDatabase) {
  VulnDb db = CalibratedVulnDb();
  auto pop = CalibratedUaPopulation(4000, 1);
  std::set<std::string> raws;
  std::map<Reason, int> reasons;
  for (const UaPopulationEntry& e : pop) {
    UaClassification c = Classify(e.raw, db);
    EXPECT_EQ(c.verdict == Verdict::kVulnerable, e.vulnerable) << e.raw;
    ++reasons[c.reason];
    if (!e.raw.empty()) EXPECT_TRUE(raws.insert(e.raw).second) << e.raw;
  }
  EXPECT_NEAR(reasons[Reason::kMissingAgent] / 4000.0, kMissingAgentShare, 0.001);
  EXPECT_GT(reasons[Reason::kNoVersion], 0);
  EXPECT_GT(reasons[Reason::kNoDbMatch], 0);
  double v = reasons[Reason::kMatchedEntry];
  double named = 4000 - reasons[Reason::kMissingAgent];
  EXPECT_NEAR(v / named, 3106.0 / 4972.0, 0.001);
}

}  // namespace
}  // namespace tagtrace
