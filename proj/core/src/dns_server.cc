#include "tagtrace/dns_server.h"

#include <arpa/inet.h>
#include <chrono>
#include <netinet/in.h>
#include <sys/socket.h>

#include "str_util.h"

namespace tagtrace {

double WallClockSeconds() {
  using namespace std::chrono;
  return duration<double>(system_clock::now().time_since_epoch()).count();
}

UdpDnsResponder::UdpDnsResponder(WildcardZone* zone, Clock clock)
    : zone_(zone), clock_(std::move(clock)) {}

UdpDnsResponder::~UdpDnsResponder() { Stop(); }

absl::StatusOr<uint16_t> UdpDnsResponder::Start(const net::HostPort& where) {
  absl::StatusOr<net::UniqueFd> fd = net::BindUdp(where);
  if (!fd.ok()) return fd.status();
  absl::StatusOr<uint16_t> port = net::LocalPort(fd->get());
  if (!port.ok()) return port.status();
  fd_ = *std::move(fd);
  stop_ = false;
  thread_ = std::thread([this] { Serve(); });
  return *port;
}

void UdpDnsResponder::Stop() {
  stop_ = true;
  if (thread_.joinable()) thread_.join();
  fd_.Reset();
}

std::optional<std::string> UdpDnsResponder::HandlePacket(
    std::string_view packet, std::string_view source) {
  absl::StatusOr<dns::Query> query = dns::ParseQuery(packet);
  if (!query.ok()) return dns::EncodeFormatError(packet);

  const dns::Question& q = query->question;
  const ZoneConfig& config = zone_->config();
  if (!IsValidDomainName(q.name)) {
    return dns::EncodeResponse(*query, dns::kFormErr, std::nullopt, 0);
  }
  if (!IsInZone(NormalizeDnsName(q.name), config.zone)) {
    return dns::EncodeResponse(*query, dns::kRefused, std::nullopt, 0);
  }
  if (q.qtype != dns::kTypeA || q.qclass != dns::kClassIn) {
    return dns::EncodeResponse(*query, dns::kNoError, std::nullopt, 0);
  }
  ResolveResult result = zone_->Resolve(q.name, source, clock_());
  if (result.outcome != ResolveOutcome::kAnswered) {
    return dns::EncodeResponse(*query, dns::kRefused, std::nullopt, 0);
  }
  return dns::EncodeResponse(*query, dns::kNoError, result.address,
                             config.ttl_seconds);
}

void UdpDnsResponder::Serve() {
  char buf[1500];
  while (!stop_) {
    if (!net::WaitReadable(fd_.get(), 100)) continue;
    sockaddr_storage peer{};
    socklen_t peer_len = sizeof(peer);
    ssize_t n = ::recvfrom(fd_.get(), buf, sizeof(buf), 0,
                           reinterpret_cast<sockaddr*>(&peer), &peer_len);
    if (n <= 0) continue;
    std::optional<std::string> reply = HandlePacket(
        std::string_view(buf, static_cast<size_t>(n)), net::PeerAddress(&peer));
    ++packets_handled_;
    if (reply) {
      ::sendto(fd_.get(), reply->data(), reply->size(), 0,
               reinterpret_cast<sockaddr*>(&peer), peer_len);
    }
  }
}

absl::StatusOr<dns::Response> QueryA(const net::HostPort& server,
                                     std::string_view name, uint16_t id,
                                     int timeout_ms) {
  absl::StatusOr<net::UniqueFd> fd = net::BindUdp({"127.0.0.1", 0});
  if (!fd.ok()) return fd.status();
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(server.port);
  if (inet_pton(AF_INET, server.host.c_str(), &addr.sin_addr) != 1) {
    return absl::InvalidArgumentError(
        internal::Cat("dns server must be an IPv4 literal: ", server.host));
  }
  std::string packet = dns::EncodeQuery(id, name);
  if (::sendto(fd->get(), packet.data(), packet.size(), 0,
               reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) < 0) {
    return absl::UnavailableError("sendto failed");
  }
  if (!net::WaitReadable(fd->get(), timeout_ms)) {
    return absl::DeadlineExceededError("dns query timed out");
  }
  char buf[1500];
  ssize_t n = ::recv(fd->get(), buf, sizeof(buf), 0);
  if (n <= 0) return absl::UnavailableError("dns recv failed");
  return dns::ParseResponse(std::string_view(buf, static_cast<size_t>(n)));
}

}  // namespace tagtrace
