#include "tagtrace/proxy_service.h"

#include <poll.h>
#include <sys/socket.h>

#include <array>

#include "str_util.h"
#include "jsonl.h"
#include "tagtrace/dns_server.h"
#include "tagtrace/dns_sim.h"
#include "tagtrace/exchange_log.h"

namespace tagtrace {

namespace {

constexpr std::array<std::string_view, 7> kHopByHop = {
    "Connection", "Keep-Alive",        "Proxy-Connection", "Proxy-Authorization",
    "TE",         "Trailer",           "Upgrade"};

void StripHopByHop(HeaderList& headers) {
  for (std::string_view name : kHopByHop) RemoveHeader(headers, name);
}

struct Target {
  net::HostPort origin;
  std::string path;
  std::string url;
};

absl::StatusOr<Target> ResolveTarget(const HttpRequest& request) {
  Target t;
  std::string_view target = request.target;
  if (target.starts_with("https://")) {
    return absl::InvalidArgumentError("https must be tunnelled with CONNECT");
  }
  std::string authority;
  if (target.size() > 7 && EqualsIgnoreCase(target.substr(0, 7), "http://")) {
    std::string_view rest = target.substr(7);
    authority = std::string(rest.substr(0, rest.find_first_of("/?#")));
    t.path = UrlPathAndQuery(target);
  } else if (target.starts_with("/")) {
    auto host = FindHeader(request.headers, "Host");
    if (!host || host->empty()) {
      return absl::InvalidArgumentError("origin-form request without Host");
    }
    authority = std::string(*host);
    t.path = std::string(target);
  } else {
    return absl::InvalidArgumentError("unsupported request target");
  }
  if (authority.empty()) return absl::InvalidArgumentError("empty host");
  absl::StatusOr<net::HostPort> hp = net::ParseHostPort(authority, 80);
  if (!hp.ok()) return hp.status();
  t.origin = *std::move(hp);
  t.url = internal::Cat("http://", authority, t.path);
  return t;
}

}  // namespace

std::string_view ProxyModeName(ProxyMode mode) {
  return mode == ProxyMode::kActive ? "active" : "passive";
}

absl::StatusOr<ProxyMode> ParseProxyMode(std::string_view text) {
  std::string lower = ToLowerAscii(TrimAscii(text));
  if (lower == "active") return ProxyMode::kActive;
  if (lower == "passive") return ProxyMode::kPassive;
  return absl::InvalidArgumentError(
      internal::Cat("unknown mode '", text, "' (want passive or active)"));
}

InterceptEngine::InterceptEngine(ProxyMode mode, InjectorConfig injector_config,
                                 ExchangeSinks sinks)
    : mode_(mode),
      injector_(std::move(injector_config)),
      sinks_(std::move(sinks)) {}

InterceptEngine::Delivery InterceptEngine::Process(const HttpExchange& upstream) {
  Delivery d;
  d.mode = mode_.load();
  std::lock_guard<std::mutex> lock(mu_);
  if (d.mode == ProxyMode::kActive && !upstream.is_encrypted) {
    Injector::Result r = injector_.Inject(upstream);
    d.exchange = std::move(r.exchange);
    d.tags = std::move(r.tags);
  } else {
    d.exchange = upstream;
  }
  ++counters_.exchanges;
  counters_.tags += d.tags.size();
  if (!d.tags.empty()) ++counters_.tagged_responses;
  if (sinks_.exchange) sinks_.exchange(d.exchange);
  if (sinks_.tag) {
    for (const Tag& t : d.tags) sinks_.tag(t);
  }
  return d;
}

InterceptEngine::Counters InterceptEngine::counters() const {
  std::lock_guard<std::mutex> lock(mu_);
  return counters_;
}

const InjectorConfig& InterceptEngine::injector_config() const {
  return injector_.config();
}

absl::StatusOr<ControlCommand> ParseControlCommand(std::string_view line) {
  std::string text = ToLowerAscii(TrimAscii(line));
  std::string_view verb = text;
  std::string_view arg;
  size_t sp = text.find(' ');
  if (sp != std::string::npos) {
    verb = std::string_view(text).substr(0, sp);
    arg = TrimAscii(std::string_view(text).substr(sp + 1));
  }
  ControlCommand cmd;
  if (verb == "status") {
    cmd.verb = ControlCommand::Verb::kGetStatus;
  } else if (verb == "snapshot") {
    cmd.verb = ControlCommand::Verb::kSnapshot;
  } else if (verb == "mode") {
    if (arg.empty()) {
      return absl::InvalidArgumentError("MODE requires PASSIVE or ACTIVE");
    }
    absl::StatusOr<ProxyMode> mode = ParseProxyMode(arg);
    if (!mode.ok()) return mode.status();
    cmd.verb = ControlCommand::Verb::kSetMode;
    cmd.argument = *mode;
    return cmd;
  } else {
    return absl::InvalidArgumentError(
        internal::Cat("unknown command '", TrimAscii(line), "'"));
  }
  if (!arg.empty()) {
    return absl::InvalidArgumentError(
        internal::Cat(verb, " takes no argument"));
  }
  return cmd;
}

absl::StatusOr<std::unique_ptr<LineLog>> LineLog::Open(
    const std::string& path) {
  auto log = std::make_unique<LineLog>();
  if (path.empty()) return log;
  log->file_ = std::fopen(path.c_str(), "wb");
  if (log->file_ == nullptr) {
    return absl::UnavailableError(internal::Cat("cannot open log ", path));
  }
  log->path_ = path;
  return log;
}

LineLog::~LineLog() {
  if (file_ != nullptr) std::fclose(file_);
}

void LineLog::Append(std::string_view line) {
  std::lock_guard<std::mutex> lock(mu_);
  if (file_ != nullptr) {
    std::fwrite(line.data(), 1, line.size(), file_);
    std::fputc('\n', file_);
  }
  ++lines_;
  bytes_ += line.size() + 1;
}

absl::Status LineLog::Flush() {
  std::lock_guard<std::mutex> lock(mu_);
  if (file_ != nullptr && std::fflush(file_) != 0) {
    return absl::DataLossError(internal::Cat("flush failed for ", path_));
  }
  return absl::OkStatus();
}

uint64_t LineLog::lines() const {
  std::lock_guard<std::mutex> lock(mu_);
  return lines_;
}

uint64_t LineLog::bytes() const {
  std::lock_guard<std::mutex> lock(mu_);
  return bytes_;
}

absl::Status ValidateProxyConfig(const ProxyConfig& config) {
  if (absl::Status s = ValidateInjectorConfig(config.injector); !s.ok()) {
    return s;
  }
  if (config.mode == ProxyMode::kActive &&
      config.payload_server_address.empty()) {
    return absl::InvalidArgumentError(
        "active mode requires a payload server address");
  }
  for (const std::string* addr :
       {&config.listen_address, &config.control_address}) {
    if (absl::StatusOr<net::HostPort> hp = net::ParseHostPort(*addr); !hp.ok()) {
      return hp.status();
    }
  }
  return absl::OkStatus();
}

absl::StatusOr<HttpResponse> TcpUpstream::Fetch(const net::HostPort& origin,
                                                const HttpRequest& request) {
  absl::StatusOr<net::UniqueFd> fd = net::ConnectTcp(origin, timeout_ms_);
  if (!fd.ok()) return fd.status();
  if (absl::Status s = net::SendAll(fd->get(), SerializeRequest(request));
      !s.ok()) {
    return s;
  }
  HttpStreamReader reader(fd->get(), timeout_ms_);
  return reader.ReadResponse(request.method);
}

ProxyService::ProxyService(ProxyConfig config,
                           std::unique_ptr<Upstream> upstream, Clock clock)
    : config_(std::move(config)),
      upstream_(std::move(upstream)),
      clock_(std::move(clock)) {}

absl::StatusOr<std::unique_ptr<ProxyService>> ProxyService::Create(
    ProxyConfig config, std::unique_ptr<Upstream> upstream, Clock clock) {
  if (absl::Status s = ValidateProxyConfig(config); !s.ok()) return s;
  if (upstream == nullptr) {
    upstream = std::make_unique<TcpUpstream>(config.upstream_timeout_ms);
  }
  if (!clock) clock = WallClockSeconds;
  std::unique_ptr<ProxyService> svc(
      new ProxyService(std::move(config), std::move(upstream), std::move(clock)));

  auto exchange_log = LineLog::Open(svc->config_.exchange_log_path);
  if (!exchange_log.ok()) return exchange_log.status();
  auto tag_log = LineLog::Open(svc->config_.tag_log_path);
  if (!tag_log.ok()) return tag_log.status();
  auto error_log = LineLog::Open(svc->config_.error_log_path);
  if (!error_log.ok()) return error_log.status();
  svc->exchange_log_ = *std::move(exchange_log);
  svc->tag_log_ = *std::move(tag_log);
  svc->error_log_ = *std::move(error_log);

  LineLog* xlog = svc->exchange_log_.get();
  LineLog* tlog = svc->tag_log_.get();
  ExchangeSinks sinks{
      [xlog](const HttpExchange& x) { xlog->Append(SerializeExchange(x)); },
      [tlog](const Tag& t) { tlog->Append(SerializeTag(t)); }};
  svc->engine_ = std::make_unique<InterceptEngine>(
      svc->config_.mode, svc->config_.injector, std::move(sinks));
  return svc;
}

ProxyService::~ProxyService() {
  Stop();
  (void)FlushLogs();
}

void ProxyService::LogError(std::string_view what) {
  internal::Json j = internal::Json::object();
  j["timestamp"] = clock_();
  j["error"] = what;
  error_log_->Append(internal::DumpCompact(j));
}

absl::Status ProxyService::FlushLogs() {
  absl::Status s = exchange_log_->Flush();
  s.Update(tag_log_->Flush());
  s.Update(error_log_->Flush());
  return s;
}

HttpResponse ProxyService::HandleExchange(const HttpRequest& request,
                                          std::string_view flow_id) {
  absl::StatusOr<Target> target = ResolveTarget(request);
  if (!target.ok()) {
    LogError(internal::Cat("bad request: ", target.status().message()));
    return MakeErrorResponse(400, internal::View(target.status().message()));
  }

  HttpRequest forward = request;
  forward.target = target->path;
  forward.version = "HTTP/1.1";
  StripHopByHop(forward.headers);
  if (!FindHeader(forward.headers, "Host")) {
    std::string host = target->origin.host;
    if (target->origin.port != 80) {
      internal::Append(&host, ":", target->origin.port);
    }
    forward.headers.insert(forward.headers.begin(), {"Host", host});
  }
  SetHeader(forward.headers, "Connection", "close");

  double started = clock_();
  absl::StatusOr<HttpResponse> upstream = upstream_->Fetch(target->origin, forward);
  if (!upstream.ok()) {
    LogError(internal::Cat("upstream ", target->url, ": ",
                          upstream.status().message()));
    return MakeErrorResponse(502, internal::View(upstream.status().message()));
  }

  HttpExchange x;
  x.exchange_id = engine_->NextExchangeId();
  x.timestamp = started;
  x.flow_id = std::string(flow_id);
  x.method = request.method;
  x.url = target->url;
  x.request_headers = request.headers;
  x.response_status = upstream->status;
  x.response_headers = upstream->headers;
  if (FindHeader(x.response_headers, "Transfer-Encoding")) {
    RemoveHeader(x.response_headers, "Transfer-Encoding");
    SetHeader(x.response_headers, "Content-Length",
              std::to_string(upstream->body.size()));
  }
  x.response_body = std::move(upstream->body);

  InterceptEngine::Delivery delivery = engine_->Process(x);

  HttpResponse out;
  out.status = delivery.exchange.response_status;
  out.reason = upstream->reason.empty()
                   ? std::string(ReasonPhrase(out.status))
                   : upstream->reason;
  out.headers = delivery.exchange.response_headers;
  StripHopByHop(out.headers);
  out.body = std::move(delivery.exchange.response_body);
  return out;
}

std::string ProxyService::Control(const ControlCommand& command) {
  switch (command.verb) {
    case ControlCommand::Verb::kGetStatus: {
      InterceptEngine::Counters c = engine_->counters();
      return internal::Cat("OK mode=", ProxyModeName(engine_->mode()),
                          " exchanges=", c.exchanges, " tags=", c.tags,
                          " tagged=", c.tagged_responses,
                          " errors=", error_log_->lines());
    }
    case ControlCommand::Verb::kSetMode:
      if (!command.argument) return "ERR MODE requires PASSIVE or ACTIVE";
      if (*command.argument == ProxyMode::kActive &&
          config_.payload_server_address.empty()) {
        return "ERR active mode requires a payload server address";
      }
      engine_->SetMode(*command.argument);
      return internal::Cat("OK mode=", ProxyModeName(*command.argument));
    case ControlCommand::Verb::kSnapshot: {
      if (absl::Status s = FlushLogs(); !s.ok()) {
        return internal::Cat("ERR ", s.message());
      }
      InterceptEngine::Counters c = engine_->counters();
      return internal::Cat(
          "OK exchange_log_lines=", exchange_log_->lines(),
          " exchange_log_bytes=", exchange_log_->bytes(),
          " tag_log_lines=", tag_log_->lines(),
          " tag_log_bytes=", tag_log_->bytes(), " exchanges=", c.exchanges,
          " tags=", c.tags);
    }
  }
  return "ERR unreachable";
}

std::string ProxyService::ControlLine(std::string_view line) {
  absl::StatusOr<ControlCommand> cmd = ParseControlCommand(line);
  if (!cmd.ok()) return internal::Cat("ERR ", cmd.status().message());
  return Control(*cmd);
}

absl::StatusOr<ProxyService::Ports> ProxyService::Start() {
  absl::StatusOr<net::HostPort> listen = net::ParseHostPort(config_.listen_address);
  if (!listen.ok()) return listen.status();
  absl::StatusOr<net::HostPort> control =
      net::ParseHostPort(config_.control_address);
  if (!control.ok()) return control.status();

  absl::StatusOr<net::UniqueFd> lfd = net::ListenTcp(*listen);
  if (!lfd.ok()) return lfd.status();
  absl::StatusOr<net::UniqueFd> cfd = net::ListenTcp(*control);
  if (!cfd.ok()) return cfd.status();

  Ports ports;
  absl::StatusOr<uint16_t> p = net::LocalPort(lfd->get());
  if (!p.ok()) return p.status();
  ports.proxy = *p;
  p = net::LocalPort(cfd->get());
  if (!p.ok()) return p.status();
  ports.control = *p;

  listen_fd_ = *std::move(lfd);
  control_fd_ = *std::move(cfd);
  stopping_ = false;
  accept_thread_ = std::thread([this] { AcceptLoop(listen_fd_.get(), false); });
  control_thread_ =
      std::thread([this] { AcceptLoop(control_fd_.get(), true); });
  return ports;
}

void ProxyService::Stop() {
  if (stopping_.exchange(true)) return;
  if (accept_thread_.joinable()) accept_thread_.join();
  if (control_thread_.joinable()) control_thread_.join();
  {
    std::unique_lock<std::mutex> lock(workers_mu_);
    for (int fd : live_fds_) ::shutdown(fd, SHUT_RDWR);
    workers_done_.wait(lock, [this] { return active_workers_ == 0; });
  }
  listen_fd_.Reset();
  control_fd_.Reset();
}

void ProxyService::TrackFd(int fd, bool add) {
  std::lock_guard<std::mutex> lock(workers_mu_);
  if (add) {
    live_fds_.insert(fd);
  } else {
    live_fds_.erase(fd);
  }
}

void ProxyService::AcceptLoop(int listen_fd, bool control) {
  while (!stopping_) {
    if (!net::WaitReadable(listen_fd, 100)) continue;
    int raw = ::accept4(listen_fd, nullptr, nullptr, SOCK_CLOEXEC);
    if (raw < 0) continue;
    net::UniqueFd fd(raw);
    {
      std::lock_guard<std::mutex> lock(workers_mu_);
      if (stopping_) break;
      ++active_workers_;
      live_fds_.insert(raw);
    }
    uint64_t id = next_connection_.fetch_add(1);
    std::thread([this, fd = std::move(fd), id, control]() mutable {
      int raw_fd = fd.get();
      if (control) {
        ServeControl(std::move(fd));
      } else {
        ServeClient(std::move(fd), id);
      }
      std::lock_guard<std::mutex> lock(workers_mu_);
      live_fds_.erase(raw_fd);
      --active_workers_;
      workers_done_.notify_all();
    }).detach();
  }
}

void ProxyService::ServeControl(net::UniqueFd fd) {
  std::string buffer;
  char buf[1024];
  while (!stopping_) {
    absl::StatusOr<size_t> n = net::RecvSome(fd.get(), buf, sizeof(buf), 200);
    if (!n.ok()) {
      if (absl::IsDeadlineExceeded(n.status())) continue;
      return;
    }
    if (*n == 0) return;
    buffer.append(buf, *n);
    size_t eol;
    while ((eol = buffer.find('\n')) != std::string::npos) {
      std::string line = buffer.substr(0, eol);
      buffer.erase(0, eol + 1);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (TrimAscii(line).empty()) continue;
      std::string reply = ControlLine(line) + "\n";
      if (!net::SendAll(fd.get(), reply).ok()) return;
    }
    if (buffer.size() > 4096) return;
  }
}

void ProxyService::ServeClient(net::UniqueFd fd, uint64_t connection_id) {
  const std::string flow_id = internal::Cat("c", connection_id);
  HttpStreamReader reader(fd.get(), config_.upstream_timeout_ms);
  while (!stopping_) {
    absl::StatusOr<std::optional<HttpRequest>> request = reader.ReadRequest();
    if (!request.ok()) {
      if (!absl::IsDeadlineExceeded(request.status()) &&
          !absl::IsUnavailable(request.status())) {
        LogError(internal::Cat("malformed request on ", flow_id, ": ",
                              request.status().message()));
        (void)net::SendAll(fd.get(),
                           SerializeResponse(MakeErrorResponse(
                               400, internal::View(request.status().message()))));
      }
      return;
    }
    if (!request->has_value()) return;
    HttpRequest& req = **request;

    if (EqualsIgnoreCase(req.method, "CONNECT")) {
      Tunnel(fd.get(), req, flow_id, reader.TakeBuffered());
      return;
    }

    bool close = WantsClose(req.version, req.headers);
    HttpResponse response = HandleExchange(req, flow_id);
    if (response.status == 400 || response.status == 502) close = true;
    SetHeader(response.headers, "Connection", close ? "close" : "keep-alive");
    if (!net::SendAll(fd.get(), SerializeResponse(response)).ok()) return;
    if (close) return;
  }
}

void ProxyService::Tunnel(int client_fd, const HttpRequest& request,
                          std::string_view flow_id, std::string buffered) {
  absl::StatusOr<net::HostPort> where = net::ParseHostPort(request.target, 443);
  if (!where.ok() || where->host.empty()) {
    LogError(internal::Cat("bad CONNECT target ", request.target));
    (void)net::SendAll(client_fd, SerializeResponse(MakeErrorResponse(
                                      400, "bad CONNECT target")));
    return;
  }
  double started = clock_();
  absl::StatusOr<net::UniqueFd> up =
      net::ConnectTcp(*where, config_.upstream_timeout_ms);
  if (!up.ok()) {
    LogError(internal::Cat("tunnel ", request.target, ": ", up.status().message()));
    (void)net::SendAll(client_fd, SerializeResponse(MakeErrorResponse(
                                      502, internal::View(up.status().message()))));
    return;
  }
  TrackFd(up->get(), true);
  (void)net::SendAll(client_fd, "HTTP/1.1 200 Connection Established\r\n\r\n");
  if (!buffered.empty()) (void)net::SendAll(up->get(), buffered);

  std::array<pollfd, 2> fds = {pollfd{client_fd, POLLIN, 0},
                               pollfd{up->get(), POLLIN, 0}};
  char buf[16384];
  bool open = true;
  while (open && !stopping_) {
    int rc = ::poll(fds.data(), fds.size(), 200);
    if (rc <= 0) continue;
    for (size_t i = 0; i < fds.size() && open; ++i) {
      if (!(fds[i].revents & (POLLIN | POLLHUP | POLLERR))) continue;
      ssize_t n = ::recv(fds[i].fd, buf, sizeof(buf), 0);
      if (n <= 0) {
        open = false;
        break;
      }
      int peer = fds[1 - i].fd;
      if (!net::SendAll(peer, std::string_view(buf, static_cast<size_t>(n)))
               .ok()) {
        open = false;
      }
    }
  }
  TrackFd(up->get(), false);

  HttpExchange x;
  x.exchange_id = engine_->NextExchangeId();
  x.timestamp = started;
  x.flow_id = std::string(flow_id);
  x.method = "CONNECT";
  x.url = internal::Cat("https://", where->host, ":", where->port);
  x.request_headers = request.headers;
  x.response_status = 200;
  x.is_encrypted = true;
  engine_->Process(x);
}

}  // namespace tagtrace
