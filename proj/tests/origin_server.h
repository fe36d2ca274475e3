// Loopback origin web server for live relay tests.

#ifndef TAGTRACE_TESTS_ORIGIN_SERVER_H_
#define TAGTRACE_TESTS_ORIGIN_SERVER_H_

#include <atomic>
#include <string>
#include <thread>

#include "httplib.h"
#include "tagtrace/http_wire.h"
#include "tagtrace/net.h"

namespace tagtrace::testing {

inline constexpr char kOriginPage[] =
    "<html><head><title>origin</title></head>\n"
    "<body><h1>hello</h1><p>plain page</p></body>\n</html>\n";

class OriginServer {
 public:
  OriginServer() {
    server_.Get("/", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(kOriginPage, "text/html");
    });
    server_.Get("/logo.png", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(std::string("\x89PNG\r\n\x1a\n</body>", 15), "image/png");
    });
    server_.Get("/chunked", [](const httplib::Request&, httplib::Response& res) {
      res.set_chunked_content_provider(
          "text/html", [](size_t offset, httplib::DataSink& sink) {
            if (offset == 0) {
              sink.write("<html><body>", 12);
              sink.write("chunks</body></html>", 20);
            }
            sink.done();
            return true;
          });
    });
    server_.set_pre_routing_handler(
        [this](const httplib::Request&, httplib::Response&) {
          ++hits_;
          return httplib::Server::HandlerResponse::Unhandled;
        });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~OriginServer() {
    server_.stop();
    thread_.join();
  }
  OriginServer(const OriginServer&) = delete;
  OriginServer& operator=(const OriginServer&) = delete;

  int port() const { return port_; }
  std::string Url(const std::string& path) const {
    return "http://127.0.0.1:" + std::to_string(port_) + path;
  }
  int hits() const { return hits_.load(); }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::atomic<int> hits_{0};
  std::thread thread_;
};

// One absolute-form GET through the relay listening on `proxy_port`.
inline absl::StatusOr<HttpResponse> ProxyGet(uint16_t proxy_port,
                                             const std::string& url,
                                             const std::string& user_agent =
                                                 "TestBrowser/1.0") {
  auto fd = net::ConnectTcp({"127.0.0.1", proxy_port}, 3000);
  if (!fd.ok()) return fd.status();
  HttpRequest req;
  req.method = "GET";
  req.target = url;
  req.headers = {{"Host", "origin"}, {"User-Agent", user_agent},
                 {"Connection", "close"}};
  if (auto s = net::SendAll(fd->get(), SerializeRequest(req)); !s.ok()) return s;
  HttpStreamReader reader(fd->get(), 5000);
  return reader.ReadResponse("GET");
}

// Body of an origin-form GET sent straight to the origin.
inline absl::StatusOr<std::string> FetchDirect(int port, const std::string& path) {
  auto fd = net::ConnectTcp({"127.0.0.1", static_cast<uint16_t>(port)}, 3000);
  if (!fd.ok()) return fd.status();
  HttpRequest req;
  req.method = "GET";
  req.target = path;
  req.headers = {{"Host", "127.0.0.1"}, {"Connection", "close"}};
  if (auto s = net::SendAll(fd->get(), SerializeRequest(req)); !s.ok()) return s;
  HttpStreamReader reader(fd->get(), 5000);
  auto resp = reader.ReadResponse("GET");
  if (!resp.ok()) return resp.status();
  return resp->body;
}

// Sends one line to a control socket and returns the reply without newline.
inline absl::StatusOr<std::string> ControlRoundTrip(uint16_t port,
                                                    const std::string& line) {
  auto fd = net::ConnectTcp({"127.0.0.1", port}, 3000);
  if (!fd.ok()) return fd.status();
  if (auto s = net::SendAll(fd->get(), line + "\n"); !s.ok()) return s;
  std::string reply;
  char buf[512];
  while (reply.find('\n') == std::string::npos) {
    auto n = net::RecvSome(fd->get(), buf, sizeof(buf), 3000);
    if (!n.ok()) return n.status();
    if (*n == 0) break;
    reply.append(buf, *n);
  }
  if (!reply.empty() && reply.back() == '\n') reply.pop_back();
  return reply;
}

}  // namespace tagtrace::testing

#endif  // TAGTRACE_TESTS_ORIGIN_SERVER_H_
