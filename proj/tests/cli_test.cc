#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <future>
#include <random>
#include <thread>

#include "commands.h"
#include "json.hpp"
#include "origin_server.h"
#include "tagtrace/client_sim.h"
#include "tagtrace/exchange_log.h"
#include "tagtrace/injector.h"
#include "test_support.h"

namespace tagtrace::cli {
namespace {

namespace fs = std::filesystem;
using Json = nlohmann::json;

std::string Slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void Write(const fs::path& p, std::string_view text) {
  std::ofstream f(p, std::ios::binary);
  f << text;
}

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun Cli(std::vector<std::string> args) {
  std::atomic<bool> stop{true};
  std::vector<const char*> argv = {"tagtrace"};
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  int code = RunCli(static_cast<int>(argv.size()), argv.data(), out, err, stop);
  return {code, out.str(), err.str()};
}

constexpr char kSmallScenario[] = R"({
  "client_count": 40,
  "duration_seconds": 1800,
  "visit_rate": 0.02,
  "mime_mix": "reference",
  "ua_population": "calibrated",
  "non_fetching_share": 0.1,
  "restarts": [{"client": 3, "at": 900}, {"client": 12, "at": 1200}]
})";

class CliTest : public ::testing::Test {
 protected:
  CliTest() { Write(dir_.path() / "scenario.json", kSmallScenario); }
  std::string Path(const std::string& name) { return dir_.file(name); }
  testing::TempDir dir_;
};

TEST_F(CliTest, SimulateIsDeterministic) {
  for (const char* out : {"a", "b"}) {
    CliRun r = Cli({"simulate", "--config", Path("scenario.json"), "--out", Path(out)});
    ASSERT_EQ(r.code, kExitOk) << r.err;
  }
  for (const char* f : {"exchanges.jsonl", "tags.jsonl", "dns.jsonl",
                        "objects.jsonl", "ground_truth.json", "vulndb.csv",
                        "scenario.json"}) {
    EXPECT_EQ(Slurp(dir_.path() / "a" / f), Slurp(dir_.path() / "b" / f)) << f;
  }
  Json ma = Json::parse(Slurp(dir_.path() / "a" / "manifest.json"));
  Json mb = Json::parse(Slurp(dir_.path() / "b" / "manifest.json"));
  EXPECT_TRUE(ma.contains("created_at"));
  ma.erase("created_at");
  mb.erase("created_at");
  ma.erase("out_dir");
  mb.erase("out_dir");
  EXPECT_EQ(ma, mb);
  EXPECT_EQ(ma["seed"], kDefaultScenarioSeed);
}

TEST_F(CliTest, SimulateZeroClients) {
  Write(dir_.path() / "zero.json",
        R"({"client_count": 0, "mime_mix": "reference", "ua_population": []})");
  CliRun r = Cli({"simulate", "--config", Path("zero.json"), "--out", Path("z")});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  for (const char* f : {"exchanges.jsonl", "tags.jsonl", "dns.jsonl"}) {
    EXPECT_TRUE(fs::exists(dir_.path() / "z" / f));
    EXPECT_EQ(fs::file_size(dir_.path() / "z" / f), 0u) << f;
  }
}

TEST_F(CliTest, AnalyzeMatchesGroundTruthWithoutReadingIt) {
  ASSERT_EQ(Cli({"simulate", "--config", Path("scenario.json"), "--out",
                 Path("logs")}).code, kExitOk);
  CliRun a = Cli({"analyze", "--logs", Path("logs"), "--out", Path("r1")});
  ASSERT_EQ(a.code, kExitOk) << a.err;

  auto truth = ReadGroundTruth(Path("logs/ground_truth.json"));
  ASSERT_TRUE(truth.ok());
  uint64_t lifetimes = 0, restarts = 0;
  for (const auto& c : truth->clients) {
    if (!c.fetches_objects) continue;
    for (const auto& l : c.lifetimes) lifetimes += l.tagged_pages_seen > 0;
    restarts += c.restarts.size();
  }
  Json report = Json::parse(Slurp(dir_.path() / "r1" / "report.json"));
  EXPECT_EQ(report["unique_users"], lifetimes);
  EXPECT_EQ(report["reappearances"].size(), restarts);
  EXPECT_EQ(report["tags"]["dynamic_issued"], truth->taggable_pages_generated);

  // Dropping the ground truth must not change the report.
  fs::remove(dir_.path() / "logs" / "ground_truth.json");
  ASSERT_EQ(Cli({"analyze", "--logs", Path("logs"), "--out", Path("r2")}).code,
            kExitOk);
  for (const char* f : {"report.json", "ratio_series.csv", "ua_growth.csv",
                        "mime_distribution.csv"}) {
    EXPECT_EQ(Slurp(dir_.path() / "r1" / f), Slurp(dir_.path() / "r2" / f)) << f;
  }

  CliRun rep = Cli({"report", "--in", Path("r1")});
  ASSERT_EQ(rep.code, kExitOk) << rep.err;
  EXPECT_NE(rep.out.find("unique users (static-name queries) " +
                         std::to_string(lifetimes)),
            std::string::npos);
}

TEST_F(CliTest, PassiveRunHasNoTags) {
  ASSERT_EQ(Cli({"simulate", "--config", Path("scenario.json"), "--mode",
                 "passive", "--out", Path("p")}).code, kExitOk);
  ASSERT_EQ(Cli({"analyze", "--logs", Path("p"), "--out", Path("pr")}).code,
            kExitOk);
  Json report = Json::parse(Slurp(dir_.path() / "pr" / "report.json"));
  EXPECT_EQ(report["tags"]["static_issued"], 0);
  EXPECT_EQ(report["tags"]["dynamic_issued"], 0);
  EXPECT_EQ(report["unique_users"], 0);
  EXPECT_GT(report["user_agents"]["unique"].get<int>(), 0);
}

TEST_F(CliTest, MissingLogIsRuntimeError) {
  fs::create_directories(dir_.path() / "empty");
  CliRun r = Cli({"analyze", "--logs", Path("empty"), "--out", Path("x")});
  EXPECT_EQ(r.code, kExitRuntime);
  EXPECT_NE(r.err.find("exchanges.jsonl"), std::string::npos);
}

TEST_F(CliTest, UsageErrors) {
  EXPECT_EQ(Cli({}).code, kExitUsage);
  EXPECT_EQ(Cli({"frobnicate"}).code, kExitUsage);
  EXPECT_EQ(Cli({"simulate"}).code, kExitUsage);  // --out is required
  EXPECT_EQ(Cli({"simulate", "--mode", "loud", "--out", Path("m")}).code,
            kExitUsage);
  EXPECT_EQ(Cli({"classify-ua"}).code, kExitUsage);
  EXPECT_EQ(Cli({"--version"}).code, kExitOk);
}

TEST_F(CliTest, InvalidScenarioIsRuntimeError) {
  Write(dir_.path() / "bad.json", R"({"client_count": 3, "http_share": 2, "mime_mix": "reference",
                 "ua_population": "calibrated"})");
  CliRun r = Cli({"simulate", "--config", Path("bad.json"), "--out", Path("b")});
  EXPECT_EQ(r.code, kExitRuntime);
  EXPECT_NE(r.err.find("http_share"), std::string::npos);
}

TEST_F(CliTest, ClassifyUa) {
  CliRun r = Cli({"classify-ua", "Mozilla/5.0 (X11; U; Linux i686; en-US; "
                              "rv:1.9.0.5) Gecko/2008 Firefox/3.0.5",
               "Wget/1.11.4", ""});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  std::istringstream lines(r.out);
  std::string header, a, b, c;
  std::getline(lines, header);
  std::getline(lines, a);
  std::getline(lines, b);
  std::getline(lines, c);
  EXPECT_EQ(header, "verdict,reason,user_agent");
  EXPECT_TRUE(a.starts_with("vulnerable,")) << a;
  EXPECT_TRUE(b.starts_with("not_vulnerable,")) << b;
  EXPECT_TRUE(c.starts_with("not_vulnerable,missing")) << c;
}

TEST_F(CliTest, InjectOfflineIsIdempotent) {
  std::vector<HttpExchange> ex;
  std::mt19937_64 rng(2);
  for (uint64_t i = 1; i <= 300; ++i) ex.push_back(testing::RandomExchange(rng, i));
  ASSERT_TRUE(WriteExchangeLog(ex, Path("in.jsonl")).ok());
  ASSERT_EQ(Cli({"inject", "--in", Path("in.jsonl"), "--out", Path("once.jsonl"),
                 "--tags", Path("t1.jsonl")}).code, kExitOk);
  ASSERT_EQ(Cli({"inject", "--in", Path("once.jsonl"), "--out",
                 Path("twice.jsonl"), "--tags", Path("t2.jsonl")}).code, kExitOk);
  EXPECT_EQ(Slurp(dir_.path() / "once.jsonl"), Slurp(dir_.path() / "twice.jsonl"));
  auto t1 = ReadTagLog(Path("t1.jsonl"));
  auto t2 = ReadTagLog(Path("t2.jsonl"));
  ASSERT_TRUE(t1.ok() && t2.ok());
  EXPECT_FALSE(t1->empty());
  EXPECT_TRUE(t2->empty());
}

TEST_F(CliTest, ProxyServiceLifecycle) {
  testing::OriginServer origin;
  std::atomic<bool> stop{false};
  std::promise<std::pair<uint16_t, uint16_t>> ready;
  std::ostringstream out;
  absl::Status result;
  ProxyOptions opts;
  opts.listen = "127.0.0.1:0";
  opts.control = "127.0.0.1:0";
  opts.mode = ProxyMode::kActive;
  opts.payload_address = "127.0.0.1:53";
  opts.out_dir = Path("proxy");
  std::thread t([&] {
    result = RunProxy(opts, stop, out, [&](uint16_t p, uint16_t c) {
      ready.set_value({p, c});
    });
  });
  auto [port, control] = ready.get_future().get();
  auto status = testing::ControlRoundTrip(control, "STATUS");
  ASSERT_TRUE(status.ok());
  EXPECT_TRUE(status->starts_with("OK mode=active exchanges=0"));
  auto page = testing::ProxyGet(port, origin.Url("/"));
  ASSERT_TRUE(page.ok());
  EXPECT_NE(page->body.find("static.beacon.test"), std::string::npos);
  stop = true;
  t.join();
  ASSERT_TRUE(result.ok()) << result;
  auto logged = ReadExchangeLog(Path("proxy/exchanges.jsonl"));
  ASSERT_TRUE(logged.ok());
  EXPECT_EQ(logged->size(), 1u);
  auto tags = ReadTagLog(Path("proxy/tags.jsonl"));
  ASSERT_TRUE(tags.ok());
  EXPECT_EQ(tags->size(), 2u);
  Json manifest = Json::parse(Slurp(dir_.path() / "proxy" / "manifest.json"));
  EXPECT_EQ(manifest["subcommand"], "proxy");
}

TEST_F(CliTest, ProxyRefusesActiveWithoutPayload) {
  std::atomic<bool> stop{true};
  std::ostringstream out;
  ProxyOptions opts;
  opts.listen = "127.0.0.1:0";
  opts.control = "127.0.0.1:0";
  opts.mode = ProxyMode::kActive;
  opts.out_dir = Path("px");
  EXPECT_FALSE(RunProxy(opts, stop, out).ok());
}

}  // namespace
}  // namespace tagtrace::cli
