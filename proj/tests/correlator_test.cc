#include <gtest/gtest.h>

#include <filesystem>
#include <random>
#include <set>

#include "tagtrace/calibration.h"
#include "tagtrace/client_sim.h"
#include "tagtrace/correlator.h"
#include "test_support.h"

namespace tagtrace {
namespace {

const BeaconNames kNames{"beacon.test", "static"};

Tag MakeTag(TagKind kind, std::string label, uint64_t id, double at) {
  Tag t;
  t.kind = kind;
  t.subdomain = label;
  t.url = "http://" + label + ".beacon.test/pixel.gif";
  t.exchange_id = id;
  t.injected_at = at;
  return t;
}

// Tags for `n` tagged pages: one static and one dynamic tag each.
std::vector<Tag> TagPages(int n) {
  std::vector<Tag> tags;
  for (int i = 0; i < n; ++i) {
    tags.push_back(MakeTag(TagKind::kStatic, "static", i + 1, i));
    tags.push_back(MakeTag(TagKind::kDynamic, "d" + std::to_string(i), i + 1, i));
  }
  return tags;
}

TEST(DeriveBeaconNamesTest, FromStaticTag) {
  auto n = DeriveBeaconNames(TagPages(1));
  ASSERT_TRUE(n.has_value());
  EXPECT_EQ(n->zone, "beacon.test");
  EXPECT_EQ(n->StaticName(), "static.beacon.test");
  std::vector<Tag> only_dynamic = {TagPages(1)[1]};
  EXPECT_FALSE(DeriveBeaconNames(only_dynamic).has_value());
}

TEST(CountUniqueUsersTest, CountsStaticRecords) {
  std::vector<DnsQueryRecord> dns = {{"static.beacon.test", "a", 1},
                                     {"STATIC.beacon.test.", "a", 2},
                                     {"d1.beacon.test", "a", 3},
                                     {"static.other.test", "b", 4}};
  EXPECT_EQ(CountUniqueUsers(dns, kNames), 2u);
}

TEST(DetectReappearancesTest, ThreeRestartsAmongThousandTags) {
  std::vector<Tag> tags = TagPages(1000);
  std::vector<DnsQueryRecord> dns;
  for (int i = 0; i < 1000; ++i) {
    dns.push_back({"d" + std::to_string(i) + ".beacon.test", "10.0.0.1", i + 0.5});
  }
  const std::set<int> restarted = {17, 404, 999};
  for (int i : restarted) {
    dns.push_back({"d" + std::to_string(i) + ".beacon.test", "10.0.0.2", 5000.0 + i});
  }
  std::shuffle(dns.begin(), dns.end(), std::mt19937_64(1));
  auto found = DetectReappearances(tags, dns, kNames);
  ASSERT_EQ(found.size(), 3u);
  std::set<int> labels;
  for (const auto& r : found) {
    labels.insert(std::stoi(r.subdomain.substr(1)));
    ASSERT_EQ(r.query_times.size(), 2u);
    EXPECT_LT(r.query_times[0], r.query_times[1]);
    EXPECT_EQ(r.sources, (std::vector<std::string>{"10.0.0.1", "10.0.0.2"}));
  }
  EXPECT_EQ(labels, restarted);
}

TEST(AccountTagsTest, TenIssuedSevenFetched) {
  std::vector<Tag> tags = TagPages(10);
  std::vector<DnsQueryRecord> dns = {{"static.beacon.test", "a", 0.5}};
  for (int i = 0; i < 7; ++i) {
    dns.push_back({"d" + std::to_string(i) + ".beacon.test", "a", i + 0.5});
  }
  TagAccounting a = AccountTags(tags, dns, kNames);
  EXPECT_EQ(a.static_issued, 10u);
  EXPECT_EQ(a.dynamic_issued, 10u);
  EXPECT_EQ(a.tagged_exchanges, 10u);
  EXPECT_EQ(a.static_queries, 1u);
  EXPECT_EQ(a.dynamic_queries, 7u);
  EXPECT_EQ(a.dynamic_labels_hit, 7u);
  EXPECT_TRUE(a.anomalies.empty());
}

TEST(AccountTagsTest, Anomalies) {
  std::vector<Tag> tags = TagPages(2);
  std::vector<DnsQueryRecord> dns = {
      {"zzz.beacon.test", "a", 5},     // never issued
      {"a.b.beacon.test", "a", 6},     // not a single label
      {"d1.beacon.test", "a", 0.25},   // before its page was tagged
      {"www.example.com", "a", 7},     // outside the zone, ignored
  };
  TagAccounting a = AccountTags(tags, dns, kNames);
  EXPECT_EQ(a.anomalies,
            (std::vector<Anomaly>{{"unissued_label", "zzz.beacon.test", 5},
                                  {"unknown_name", "a.b.beacon.test", 6},
                                  {"hit_before_injection", "d1.beacon.test", 0.25}}));
  EXPECT_EQ(a.dynamic_queries, 1u);
}

TEST(CheckTimeAlignmentTest, Cases) {
  std::vector<HttpExchange> ex = {testing::HtmlExchange("x", 100),
                                  testing::HtmlExchange("x", 200)};
  auto at = [](double t) { return std::vector<DnsQueryRecord>{{"n", "s", t}}; };
  EXPECT_TRUE(CheckTimeAlignment(ex, at(150)).ok());
  EXPECT_TRUE(CheckTimeAlignment(ex, at(200 + 86400)).ok());
  EXPECT_EQ(CheckTimeAlignment(ex, at(50)).code(),
            absl::StatusCode::kFailedPrecondition);
  EXPECT_EQ(CheckTimeAlignment(ex, at(200 + 86401)).code(),
            absl::StatusCode::kFailedPrecondition);
  EXPECT_TRUE(CheckTimeAlignment(ex, {}).ok());
  EXPECT_TRUE(CheckTimeAlignment({}, at(1)).ok());
}

TEST(BuildReportTest, MisalignedLogsFail) {
  std::vector<HttpExchange> ex = {testing::HtmlExchange("x", 1000)};
  std::vector<DnsQueryRecord> dns = {{"static.beacon.test", "a", 1}};
  auto r = BuildReport(ex, {}, dns, VulnDb());
  EXPECT_EQ(r.status().code(), absl::StatusCode::kFailedPrecondition);
}

// Checks the log-only report against what the simulator knows it did.
TEST(BuildReportTest, AgreesWithSimulatorTruth) {
  ScenarioConfig c;
  c.client_count = 60;
  c.duration_seconds = 3600;
  c.visit_rate = 1.0 / 90;
  c.mime_mix = ReferenceMimeMix();
  c.ua_population = CalibratedUaPopulation(60, c.seed);
  c.non_fetching_share = 0.1;
  c.restarts = {{2, 900}, {13, 1800}, {28, 2400}};  // i % 10 == 9 skips objects
  auto out = RunScenario(c);
  ASSERT_TRUE(out.ok());
  auto report = BuildReport(out->exchanges, out->tags, out->dns_log,
                            CalibratedVulnDb());
  ASSERT_TRUE(report.ok()) << report.status();

  uint64_t lifetimes = 0;
  std::set<std::string> restored;
  for (const auto& t : out->truth.clients) {
    if (!t.fetches_objects) continue;
    for (const auto& l : t.lifetimes) lifetimes += l.tagged_pages_seen > 0;
    for (const auto& r : t.restarts) {
      restored.insert(r.restored_dynamic_labels.begin(),
                      r.restored_dynamic_labels.end());
    }
  }
  EXPECT_EQ(report->unique_users, lifetimes);
  EXPECT_EQ(report->static_query_sources, 54u);
  ASSERT_EQ(restored.size(), 3u);
  std::set<std::string> found;
  for (const auto& r : report->reappearances) found.insert(r.subdomain);
  EXPECT_EQ(found, restored);
  EXPECT_EQ(report->accounting.dynamic_issued, out->truth.taggable_pages_generated);
  EXPECT_TRUE(report->accounting.anomalies.empty());
  EXPECT_EQ(report->exchanges, out->exchanges.size());
  EXPECT_EQ(report->encrypted_exchanges, out->truth.encrypted_visits);
  ASSERT_TRUE(report->vulnerability_ratio.has_value());

  // A request without the header counts as one more distinct string.
  std::set<std::string> agents;
  uint64_t vulnerable = 0;
  for (const auto& t : out->truth.clients) {
    if (agents.insert(t.user_agent).second) vulnerable += t.ua_vulnerable;
  }
  EXPECT_EQ(report->unique_user_agents, agents.size());
  EXPECT_EQ(report->vulnerable_user_agents, vulnerable);

  testing::TempDir dir;
  ASSERT_TRUE(WriteReport(*report, dir.file("r")).ok());
  for (const char* f : {"report.json", "ratio_series.csv", "ua_growth.csv",
                        "mime_distribution.csv"}) {
    EXPECT_TRUE(std::filesystem::exists(dir.path() / "r" / f)) << f;
  }
}

TEST(BuildReportTest, ReferenceRunRatioIsStable) {
  auto out = RunScenario(ReferenceScenario());
  ASSERT_TRUE(out.ok());
  auto report = BuildReport(out->exchanges, out->tags, out->dns_log,
                            CalibratedVulnDb());
  ASSERT_TRUE(report.ok());
  ASSERT_GE(report->ratio_series.points.size(), 20u);
  for (const RatioPoint& p : report->ratio_series.points) {
    ASSERT_TRUE(p.ratio.has_value()) << p.window_start;
    EXPECT_GE(*p.ratio, 0.60) << p.window_start;
    EXPECT_LE(*p.ratio, 0.66) << p.window_start;
  }
  for (size_t i = 1; i < report->ua_growth.size(); ++i) {
    EXPECT_GT(report->ua_growth[i].cumulative_unique,
              report->ua_growth[i - 1].cumulative_unique)
        << report->ua_growth[i].window_start;
  }
}

TEST(FormatMimeCsvTest, SortedByCount) {
  MimeDistribution d;
  d.Add("image/gif", 1);
  d.Add("text/html", 3);
  EXPECT_EQ(FormatMimeCsv(d), "mime,count,percent\ntext/html,3,75\nimage/gif,1,25\n");
}

}  // namespace
}  // namespace tagtrace
