#include <gtest/gtest.h>

#include <random>

#include "origin_server.h"
#include "tagtrace/exchange_log.h"
#include "tagtrace/proxy_service.h"
#include "test_support.h"

namespace tagtrace {
namespace {

using testing::HtmlExchange;

constexpr char kPage[] = "<html><body><p>x</p></body></html>";

TEST(ProxyModeTest, Parse) {
  EXPECT_EQ(*ParseProxyMode(" Active "), ProxyMode::kActive);
  EXPECT_EQ(*ParseProxyMode("passive"), ProxyMode::kPassive);
  EXPECT_FALSE(ParseProxyMode("loud").ok());
  EXPECT_EQ(ProxyModeName(ProxyMode::kActive), "active");
}

TEST(InterceptEngineTest, PassiveIsIdentity) {
  std::vector<HttpExchange> logged;
  std::vector<Tag> tags;
  InterceptEngine engine(ProxyMode::kPassive, {},
                         {[&](const HttpExchange& x) { logged.push_back(x); },
                          [&](const Tag& t) { tags.push_back(t); }});
  std::mt19937_64 rng(3);
  for (uint64_t i = 1; i <= 500; ++i) {
    HttpExchange x = testing::RandomExchange(rng, i);
    EXPECT_EQ(engine.Process(x).exchange, x);
  }
  EXPECT_EQ(logged.size(), 500u);
  EXPECT_TRUE(tags.empty());
  EXPECT_EQ(engine.counters().tags, 0u);
}

TEST(InterceptEngineTest, ActiveTagsAndSwitches) {
  std::vector<Tag> tags;
  InterceptEngine engine(ProxyMode::kActive, {},
                         {nullptr, [&](const Tag& t) { tags.push_back(t); }});
  auto d = engine.Process(HtmlExchange(kPage, 1));
  EXPECT_EQ(d.mode, ProxyMode::kActive);
  EXPECT_EQ(d.tags.size(), 2u);
  engine.SetMode(ProxyMode::kPassive);
  auto p = engine.Process(HtmlExchange(kPage, 2));
  EXPECT_TRUE(p.tags.empty());
  EXPECT_EQ(p.exchange.response_body, kPage);
  auto c = engine.counters();
  EXPECT_EQ(c.exchanges, 2u);
  EXPECT_EQ(c.tags, 2u);
  EXPECT_EQ(c.tagged_responses, 1u);
  EXPECT_EQ(tags.size(), 2u);
}

TEST(InterceptEngineTest, EncryptedPassesThroughInActiveMode) {
  InterceptEngine engine(ProxyMode::kActive, {}, {});
  HttpExchange x = HtmlExchange(kPage, 1);
  x.is_encrypted = true;
  x.response_body.clear();
  auto d = engine.Process(x);
  EXPECT_EQ(d.exchange, x);
  EXPECT_TRUE(d.tags.empty());
}

TEST(ControlCommandTest, Parse) {
  EXPECT_EQ(ParseControlCommand("status")->verb, ControlCommand::Verb::kGetStatus);
  EXPECT_EQ(ParseControlCommand(" SNAPSHOT ")->verb,
            ControlCommand::Verb::kSnapshot);
  auto m = ParseControlCommand("Mode Active");
  ASSERT_TRUE(m.ok());
  EXPECT_EQ(m->verb, ControlCommand::Verb::kSetMode);
  EXPECT_EQ(m->argument, ProxyMode::kActive);
  EXPECT_FALSE(ParseControlCommand("MODE").ok());
  EXPECT_FALSE(ParseControlCommand("MODE loud").ok());
  EXPECT_FALSE(ParseControlCommand("STATUS now").ok());
  EXPECT_FALSE(ParseControlCommand("reboot").ok());
}

TEST(ProxyConfigTest, Validation) {
  ProxyConfig c;
  EXPECT_TRUE(ValidateProxyConfig(c).ok());
  c.mode = ProxyMode::kActive;
  EXPECT_FALSE(ValidateProxyConfig(c).ok());
  c.payload_server_address = "127.0.0.1:5353";
  EXPECT_TRUE(ValidateProxyConfig(c).ok());
  c.injector.zone = "not a zone";
  EXPECT_FALSE(ValidateProxyConfig(c).ok());
  c = ProxyConfig{};
  c.listen_address = "127.0.0.1:notaport";
  EXPECT_FALSE(ValidateProxyConfig(c).ok());
}

class FakeUpstream : public Upstream {
 public:
  absl::StatusOr<HttpResponse> Fetch(const net::HostPort& origin,
                                     const HttpRequest& request) override {
    last_origin = origin;
    last_request = request;
    if (origin.host == "down.example") return absl::UnavailableError("refused");
    HttpResponse r;
    r.headers = {{"Content-Type", "text/html"},
                 {"Content-Length", std::to_string(sizeof(kPage) - 1)},
                 {"Keep-Alive", "timeout=5"}};
    r.body = kPage;
    return r;
  }
  net::HostPort last_origin;
  HttpRequest last_request;
};

class ProxyServiceTest : public ::testing::Test {
 protected:
  void Make(ProxyMode mode) {
    ProxyConfig c;
    c.listen_address = "127.0.0.1:0";
    c.control_address = "127.0.0.1:0";
    c.mode = mode;
    c.payload_server_address = "127.0.0.1:53";
    c.exchange_log_path = dir_.file("exchanges.jsonl");
    c.tag_log_path = dir_.file("tags.jsonl");
    c.error_log_path = dir_.file("errors.jsonl");
    auto up = std::make_unique<FakeUpstream>();
    upstream_ = up.get();
    auto svc = ProxyService::Create(c, std::move(up), [] { return 7.0; });
    ASSERT_TRUE(svc.ok()) << svc.status();
    svc_ = *std::move(svc);
  }
  HttpRequest Get(std::string target) {
    HttpRequest r;
    r.method = "GET";
    r.target = std::move(target);
    r.headers = {{"Host", "o.example"}, {"Proxy-Connection", "keep-alive"}};
    return r;
  }

  testing::TempDir dir_;
  FakeUpstream* upstream_ = nullptr;
  std::unique_ptr<ProxyService> svc_;
};

TEST_F(ProxyServiceTest, ForwardsOriginFormAndStripsHopByHop) {
  Make(ProxyMode::kPassive);
  HttpResponse r = svc_->HandleExchange(Get("http://o.example:8080/a?b=1"), "c1");
  EXPECT_EQ(r.status, 200);
  EXPECT_EQ(r.body, kPage);
  EXPECT_FALSE(FindHeader(r.headers, "Keep-Alive"));
  EXPECT_EQ(upstream_->last_origin.port, 8080);
  EXPECT_EQ(upstream_->last_request.target, "/a?b=1");
  EXPECT_FALSE(FindHeader(upstream_->last_request.headers, "Proxy-Connection"));
}

TEST_F(ProxyServiceTest, ActiveKeepsContentLengthConsistent) {
  Make(ProxyMode::kActive);
  HttpResponse r = svc_->HandleExchange(Get("http://o.example/"), "c1");
  EXPECT_NE(r.body, kPage);
  EXPECT_EQ(FindHeader(r.headers, "Content-Length"), std::to_string(r.body.size()));
}

TEST_F(ProxyServiceTest, ErrorsBecomeResponses) {
  Make(ProxyMode::kPassive);
  EXPECT_EQ(svc_->HandleExchange(Get("http://down.example/"), "c").status, 502);
  EXPECT_EQ(svc_->HandleExchange(Get("ftp://x/"), "c").status, 400);
  EXPECT_EQ(svc_->HandleExchange(Get("https://x/"), "c").status, 400);
  EXPECT_EQ(svc_->errors(), 3u);
  EXPECT_EQ(svc_->engine().counters().exchanges, 0u);
}

TEST_F(ProxyServiceTest, ControlRepliesAndSnapshotCounts) {
  Make(ProxyMode::kPassive);
  EXPECT_TRUE(svc_->ControlLine("STATUS").starts_with("OK mode=passive"));
  EXPECT_TRUE(svc_->ControlLine("MODE").starts_with("ERR"));
  EXPECT_EQ(svc_->ControlLine("MODE ACTIVE"), "OK mode=active");
  for (int i = 0; i < 3; ++i) svc_->HandleExchange(Get("http://o.example/"), "c");
  std::string snap = svc_->ControlLine("SNAPSHOT");
  EXPECT_EQ(snap, "OK exchange_log_lines=3 exchange_log_bytes=" +
                      std::to_string(std::filesystem::file_size(
                          dir_.file("exchanges.jsonl"))) +
                      " tag_log_lines=6 tag_log_bytes=" +
                      std::to_string(std::filesystem::file_size(
                          dir_.file("tags.jsonl"))) +
                      " exchanges=3 tags=6");
  auto logged = ReadExchangeLog(dir_.file("exchanges.jsonl"));
  ASSERT_TRUE(logged.ok());
  ASSERT_EQ(logged->size(), 3u);
  EXPECT_EQ((*logged)[0].timestamp, 7.0);
}

TEST(ProxyServiceCreateTest, PassiveCannotSwitchWithoutPayloadServer) {
  ProxyConfig c;
  auto svc = ProxyService::Create(c, std::make_unique<FakeUpstream>());
  ASSERT_TRUE(svc.ok());
  EXPECT_TRUE((*svc)->ControlLine("MODE ACTIVE").starts_with("ERR"));
}

TEST(ProxyServiceLiveTest, RelaysThroughLoopback) {
  testing::OriginServer origin;
  ProxyConfig c;
  c.listen_address = "127.0.0.1:0";
  c.control_address = "127.0.0.1:0";
  c.payload_server_address = "127.0.0.1:53";
  auto svc = ProxyService::Create(c);
  ASSERT_TRUE(svc.ok());
  auto ports = (*svc)->Start();
  ASSERT_TRUE(ports.ok()) << ports.status();

  auto plain = testing::ProxyGet(ports->proxy, origin.Url("/"));
  ASSERT_TRUE(plain.ok()) << plain.status();
  EXPECT_EQ(plain->body, testing::kOriginPage);

  auto reply = testing::ControlRoundTrip(ports->control, "mode active");
  ASSERT_TRUE(reply.ok());
  EXPECT_EQ(*reply, "OK mode=active");

  auto tagged = testing::ProxyGet(ports->proxy, origin.Url("/"));
  ASSERT_TRUE(tagged.ok());
  EXPECT_NE(tagged->body.find("static.beacon.test"), std::string::npos);
  EXPECT_EQ(StripInjectedBeacons(tagged->body, "beacon.test"),
            testing::kOriginPage);

  auto chunked = testing::ProxyGet(ports->proxy, origin.Url("/chunked"));
  ASSERT_TRUE(chunked.ok());
  EXPECT_NE(chunked->body.find("static.beacon.test"), std::string::npos);

  auto png = testing::ProxyGet(ports->proxy, origin.Url("/logo.png"));
  ASSERT_TRUE(png.ok());
  EXPECT_EQ(png->body.size(), 15u);

  auto dead = testing::ProxyGet(ports->proxy, "http://127.0.0.1:1/");
  ASSERT_TRUE(dead.ok());
  EXPECT_EQ(dead->status, 502);

  auto status = testing::ControlRoundTrip(ports->control, "STATUS");
  ASSERT_TRUE(status.ok());
  EXPECT_EQ(*status, "OK mode=active exchanges=4 tags=4 tagged=2 errors=1");
  (*svc)->Stop();
}

}  // namespace
}  // namespace tagtrace
