// Intercepting HTTP relay with a passive (observe) and an active (tag) mode,
// plus a line-oriented control socket for switching between them.
//
// InterceptEngine is the transport-free core shared by the live proxy and the
// simulator: it reads the mode once per exchange, optionally runs the
// injector, and hands every exchange and tag to the sinks in one total order.

#ifndef TAGTRACE_PROXY_SERVICE_H_
#define TAGTRACE_PROXY_SERVICE_H_

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "tagtrace/http_model.h"
#include "tagtrace/http_wire.h"
#include "tagtrace/injector.h"
#include "tagtrace/net.h"

namespace tagtrace {

enum class ProxyMode { kPassive, kActive };

std::string_view ProxyModeName(ProxyMode mode);  // "passive" / "active"
absl::StatusOr<ProxyMode> ParseProxyMode(std::string_view text);

struct ExchangeSinks {
  std::function<void(const HttpExchange&)> exchange;
  std::function<void(const Tag&)> tag;
};

class InterceptEngine {
 public:
  InterceptEngine(ProxyMode mode, InjectorConfig injector_config,
                  ExchangeSinks sinks);

  struct Delivery {
    HttpExchange exchange;  // what the client receives
    std::vector<Tag> tags;
    ProxyMode mode = ProxyMode::kPassive;
  };

  // Applies the current mode to one upstream exchange and logs the delivered
  // version. Encrypted exchanges are always passed through.
  Delivery Process(const HttpExchange& upstream);

  ProxyMode mode() const { return mode_.load(); }
  void SetMode(ProxyMode mode) { mode_.store(mode); }

  uint64_t NextExchangeId() { return next_exchange_id_.fetch_add(1); }

  struct Counters {
    uint64_t exchanges = 0;
    uint64_t tags = 0;
    uint64_t tagged_responses = 0;
  };
  Counters counters() const;

  const InjectorConfig& injector_config() const;

 private:
  std::atomic<ProxyMode> mode_;
  std::atomic<uint64_t> next_exchange_id_{1};
  mutable std::mutex mu_;  // guards injector_, counters_ and sink order
  Injector injector_;
  ExchangeSinks sinks_;
  Counters counters_;
};

struct ControlCommand {
  enum class Verb { kGetStatus, kSetMode, kSnapshot };
  Verb verb = Verb::kGetStatus;
  std::optional<ProxyMode> argument;
};

// STATUS | MODE PASSIVE | MODE ACTIVE | SNAPSHOT (case-insensitive).
absl::StatusOr<ControlCommand> ParseControlCommand(std::string_view line);

// Append-only log file with line and byte accounting. Lines are buffered and
// reach the file on Flush() or destruction.
class LineLog {
 public:
  LineLog() = default;  // discards lines, still counts them
  static absl::StatusOr<std::unique_ptr<LineLog>> Open(const std::string& path);
  ~LineLog();

  void Append(std::string_view line);
  absl::Status Flush();

  uint64_t lines() const;
  uint64_t bytes() const;
  const std::string& path() const { return path_; }

 private:
  mutable std::mutex mu_;
  std::string path_;
  std::FILE* file_ = nullptr;
  uint64_t lines_ = 0;
  uint64_t bytes_ = 0;
};

struct ProxyConfig {
  std::string listen_address = "127.0.0.1:8080";
  std::string control_address = "127.0.0.1:8081";
  ProxyMode mode = ProxyMode::kPassive;
  InjectorConfig injector;
  std::string payload_server_address;
  std::string exchange_log_path;  // empty: count only
  std::string tag_log_path;
  std::string error_log_path;
  int upstream_timeout_ms = 10000;
};

// Active mode needs a zone, a static label and a payload server address.
absl::Status ValidateProxyConfig(const ProxyConfig& config);

// Fetches an origin-form request from an origin server.
class Upstream {
 public:
  virtual ~Upstream() = default;
  virtual absl::StatusOr<HttpResponse> Fetch(const net::HostPort& origin,
                                             const HttpRequest& request) = 0;
};

class TcpUpstream : public Upstream {
 public:
  explicit TcpUpstream(int timeout_ms = 10000) : timeout_ms_(timeout_ms) {}
  absl::StatusOr<HttpResponse> Fetch(const net::HostPort& origin,
                                     const HttpRequest& request) override;

 private:
  int timeout_ms_;
};

class ProxyService {
 public:
  using Clock = std::function<double()>;

  // Validates the config and opens the log files.
  static absl::StatusOr<std::unique_ptr<ProxyService>> Create(
      ProxyConfig config, std::unique_ptr<Upstream> upstream = nullptr,
      Clock clock = nullptr);
  ~ProxyService();

  // Relays one complete request and returns the response to deliver.
  // Unreachable upstreams yield 502, malformed targets 400.
  HttpResponse HandleExchange(const HttpRequest& request,
                              std::string_view flow_id);

  std::string Control(const ControlCommand& command);
  // Parses and runs one control line; always returns a single-line reply
  // starting with "OK" or "ERR".
  std::string ControlLine(std::string_view line);

  struct Ports {
    uint16_t proxy = 0;
    uint16_t control = 0;
  };
  absl::StatusOr<Ports> Start();
  void Stop();

  InterceptEngine& engine() { return *engine_; }
  uint64_t errors() const { return error_log_->lines(); }
  absl::Status FlushLogs();

 private:
  ProxyService(ProxyConfig config, std::unique_ptr<Upstream> upstream,
               Clock clock);

  void AcceptLoop(int listen_fd, bool control);
  void ServeClient(net::UniqueFd fd, uint64_t connection_id);
  void ServeControl(net::UniqueFd fd);
  void Tunnel(int client_fd, const HttpRequest& request,
              std::string_view flow_id, std::string buffered);
  void LogError(std::string_view what);
  void TrackFd(int fd, bool add);

  ProxyConfig config_;
  std::unique_ptr<Upstream> upstream_;
  Clock clock_;
  std::unique_ptr<LineLog> exchange_log_;
  std::unique_ptr<LineLog> tag_log_;
  std::unique_ptr<LineLog> error_log_;
  std::unique_ptr<InterceptEngine> engine_;

  std::atomic<bool> stopping_{false};
  std::atomic<uint64_t> next_connection_{1};
  net::UniqueFd listen_fd_;
  net::UniqueFd control_fd_;
  std::thread accept_thread_;
  std::thread control_thread_;
  std::mutex workers_mu_;
  std::condition_variable workers_done_;
  int active_workers_ = 0;
  std::set<int> live_fds_;
};

}  // namespace tagtrace

#endif  // TAGTRACE_PROXY_SERVICE_H_
