// Thin POSIX socket helpers used by the live services.

#ifndef TAGTRACE_NET_H_
#define TAGTRACE_NET_H_

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>

#include "absl/status/status.h"
#include "absl/status/statusor.h"

namespace tagtrace::net {

class UniqueFd {
 public:
  UniqueFd() = default;
  explicit UniqueFd(int fd) : fd_(fd) {}
  ~UniqueFd() { Reset(); }

  UniqueFd(UniqueFd&& other) noexcept : fd_(std::exchange(other.fd_, -1)) {}
  UniqueFd& operator=(UniqueFd&& other) noexcept {
    if (this != &other) {
      Reset();
      fd_ = std::exchange(other.fd_, -1);
    }
    return *this;
  }
  UniqueFd(const UniqueFd&) = delete;
  UniqueFd& operator=(const UniqueFd&) = delete;

  int get() const { return fd_; }
  bool valid() const { return fd_ >= 0; }
  void Reset();

 private:
  int fd_ = -1;
};

struct HostPort {
  std::string host;
  uint16_t port = 0;
};

// "host:port", "[v6]:port" or "host" (port `default_port`).
absl::StatusOr<HostPort> ParseHostPort(std::string_view text,
                                       uint16_t default_port = 0);

// Listening TCP socket; port 0 picks an ephemeral port.
absl::StatusOr<UniqueFd> ListenTcp(const HostPort& where, int backlog = 64);
absl::StatusOr<UniqueFd> BindUdp(const HostPort& where);

// Port a bound socket actually listens on.
absl::StatusOr<uint16_t> LocalPort(int fd);

absl::StatusOr<UniqueFd> ConnectTcp(const HostPort& where,
                                    int timeout_ms = 5000);

// Waits up to `timeout_ms` for `fd` to become readable. Returns false on
// timeout.
bool WaitReadable(int fd, int timeout_ms);

absl::Status SendAll(int fd, std::string_view data);

// Reads once; returns 0 bytes at EOF. Fails on timeout or socket error.
absl::StatusOr<size_t> RecvSome(int fd, char* buf, size_t len, int timeout_ms);

// Dotted IPv4 string of a sockaddr_in peer, or "unknown".
std::string PeerAddress(const void* sockaddr_storage);

}  // namespace tagtrace::net

#endif  // TAGTRACE_NET_H_
