#include "tagtrace/net.h"

#include <arpa/inet.h>
#include <cerrno>
#include <cstring>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include "absl/strings/numbers.h"
#include "str_util.h"

namespace tagtrace::net {

namespace {

absl::Status Errno(std::string_view what) {
  return absl::UnavailableError(internal::Cat(what, ": ", std::strerror(errno)));
}

absl::StatusOr<sockaddr_in> Resolve4(const HostPort& where) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(where.port);
  std::string host = where.host.empty() ? "0.0.0.0" : where.host;
  if (host == "localhost") host = "127.0.0.1";
  if (inet_pton(AF_INET, host.c_str(), &addr.sin_addr) == 1) return addr;

  addrinfo hints{};
  hints.ai_family = AF_INET;
  addrinfo* res = nullptr;
  if (getaddrinfo(host.c_str(), nullptr, &hints, &res) != 0 || res == nullptr) {
    return absl::NotFoundError(internal::Cat("cannot resolve host ", host));
  }
  addr.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
  freeaddrinfo(res);
  return addr;
}

}  // namespace

void UniqueFd::Reset() {
  if (fd_ >= 0) ::close(fd_);
  fd_ = -1;
}

absl::StatusOr<HostPort> ParseHostPort(std::string_view text,
                                       uint16_t default_port) {
  HostPort hp;
  hp.port = default_port;
  std::string_view port_text;
  if (!text.empty() && text.front() == '[') {
    size_t close = text.find(']');
    if (close == std::string_view::npos) {
      return absl::InvalidArgumentError(internal::Cat("bad address ", text));
    }
    hp.host = std::string(text.substr(1, close - 1));
    if (close + 1 < text.size()) {
      if (text[close + 1] != ':') {
        return absl::InvalidArgumentError(internal::Cat("bad address ", text));
      }
      port_text = text.substr(close + 2);
    }
  } else {
    size_t colon = text.rfind(':');
    if (colon == std::string_view::npos) {
      hp.host = std::string(text);
    } else {
      hp.host = std::string(text.substr(0, colon));
      port_text = text.substr(colon + 1);
    }
  }
  if (!port_text.empty()) {
    uint32_t port = 0;
    if (!absl::SimpleAtoi(std::string(port_text), &port) || port > 65535) {
      return absl::InvalidArgumentError(internal::Cat("bad port in ", text));
    }
    hp.port = static_cast<uint16_t>(port);
  }
  return hp;
}

absl::StatusOr<UniqueFd> ListenTcp(const HostPort& where, int backlog) {
  absl::StatusOr<sockaddr_in> addr = Resolve4(where);
  if (!addr.ok()) return addr.status();
  UniqueFd fd(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
  if (!fd.valid()) return Errno("socket");
  int one = 1;
  ::setsockopt(fd.get(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  if (::bind(fd.get(), reinterpret_cast<const sockaddr*>(&*addr),
             sizeof(*addr)) != 0) {
    return Errno(internal::Cat("bind ", where.host, ":", where.port));
  }
  if (::listen(fd.get(), backlog) != 0) return Errno("listen");
  return fd;
}

absl::StatusOr<UniqueFd> BindUdp(const HostPort& where) {
  absl::StatusOr<sockaddr_in> addr = Resolve4(where);
  if (!addr.ok()) return addr.status();
  UniqueFd fd(::socket(AF_INET, SOCK_DGRAM | SOCK_CLOEXEC, 0));
  if (!fd.valid()) return Errno("socket");
  if (::bind(fd.get(), reinterpret_cast<const sockaddr*>(&*addr),
             sizeof(*addr)) != 0) {
    return Errno(internal::Cat("bind udp ", where.host, ":", where.port));
  }
  return fd;
}

absl::StatusOr<uint16_t> LocalPort(int fd) {
  sockaddr_in addr{};
  socklen_t len = sizeof(addr);
  if (::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len) != 0) {
    return Errno("getsockname");
  }
  return ntohs(addr.sin_port);
}

absl::StatusOr<UniqueFd> ConnectTcp(const HostPort& where, int timeout_ms) {
  absl::StatusOr<sockaddr_in> addr = Resolve4(where);
  if (!addr.ok()) return addr.status();
  UniqueFd fd(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
  if (!fd.valid()) return Errno("socket");

  int flags = ::fcntl(fd.get(), F_GETFL, 0);
  ::fcntl(fd.get(), F_SETFL, flags | O_NONBLOCK);
  int rc = ::connect(fd.get(), reinterpret_cast<const sockaddr*>(&*addr),
                     sizeof(*addr));
  if (rc != 0 && errno != EINPROGRESS) {
    return Errno(internal::Cat("connect ", where.host, ":", where.port));
  }
  if (rc != 0) {
    pollfd p{fd.get(), POLLOUT, 0};
    if (::poll(&p, 1, timeout_ms) <= 0) {
      return absl::DeadlineExceededError(
          internal::Cat("connect ", where.host, ":", where.port, " timed out"));
    }
    int err = 0;
    socklen_t len = sizeof(err);
    ::getsockopt(fd.get(), SOL_SOCKET, SO_ERROR, &err, &len);
    if (err != 0) {
      errno = err;
      return Errno(internal::Cat("connect ", where.host, ":", where.port));
    }
  }
  ::fcntl(fd.get(), F_SETFL, flags);
  int one = 1;
  ::setsockopt(fd.get(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  return fd;
}

bool WaitReadable(int fd, int timeout_ms) {
  pollfd p{fd, POLLIN, 0};
  int rc;
  do {
    rc = ::poll(&p, 1, timeout_ms);
  } while (rc < 0 && errno == EINTR);
  return rc > 0;
}

absl::Status SendAll(int fd, std::string_view data) {
  while (!data.empty()) {
    ssize_t n = ::send(fd, data.data(), data.size(), MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      return Errno("send");
    }
    data.remove_prefix(static_cast<size_t>(n));
  }
  return absl::OkStatus();
}

absl::StatusOr<size_t> RecvSome(int fd, char* buf, size_t len, int timeout_ms) {
  if (!WaitReadable(fd, timeout_ms)) {
    return absl::DeadlineExceededError("receive timed out");
  }
  while (true) {
    ssize_t n = ::recv(fd, buf, len, 0);
    if (n >= 0) return static_cast<size_t>(n);
    if (errno == EINTR) continue;
    return Errno("recv");
  }
}

std::string PeerAddress(const void* sockaddr_storage) {
  const auto* sa = static_cast<const sockaddr*>(sockaddr_storage);
  if (sa->sa_family != AF_INET) return "unknown";
  char buf[INET_ADDRSTRLEN] = {};
  const auto* in = static_cast<const sockaddr_in*>(sockaddr_storage);
  if (inet_ntop(AF_INET, &in->sin_addr, buf, sizeof(buf)) == nullptr) {
    return "unknown";
  }
  return buf;
}

}  // namespace tagtrace::net
