// UDP front end for WildcardZone.

#ifndef TAGTRACE_DNS_SERVER_H_
#define TAGTRACE_DNS_SERVER_H_

#include <atomic>
#include <functional>
#include <optional>
#include <string>
#include <thread>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "tagtrace/dns_sim.h"
#include "tagtrace/dns_wire.h"
#include "tagtrace/net.h"

namespace tagtrace {

// Seconds since the Unix epoch, from the system clock.
double WallClockSeconds();

// Answers A/IN queries for the zone with one record carrying the configured
// TTL. Other query types inside the zone get an empty NOERROR reply and are
// not logged; out-of-zone names get REFUSED; unparsable names get FORMERR.
class UdpDnsResponder {
 public:
  using Clock = std::function<double()>;

  explicit UdpDnsResponder(WildcardZone* zone, Clock clock = WallClockSeconds);
  ~UdpDnsResponder();

  UdpDnsResponder(const UdpDnsResponder&) = delete;
  UdpDnsResponder& operator=(const UdpDnsResponder&) = delete;

  // Binds and starts the serving thread. Returns the bound port.
  absl::StatusOr<uint16_t> Start(const net::HostPort& where);
  void Stop();

  // Builds the reply for one packet and the source it came from. Exposed so
  // the decision logic can be exercised without sockets.
  std::optional<std::string> HandlePacket(std::string_view packet,
                                          std::string_view source);

  uint64_t packets_handled() const { return packets_handled_.load(); }

 private:
  void Serve();

  WildcardZone* zone_;
  Clock clock_;
  net::UniqueFd fd_;
  std::atomic<bool> stop_{false};
  std::atomic<uint64_t> packets_handled_{0};
  std::thread thread_;
};

// Sends one A query and waits for the reply.
absl::StatusOr<dns::Response> QueryA(const net::HostPort& server,
                                     std::string_view name, uint16_t id,
                                     int timeout_ms = 2000);

}  // namespace tagtrace

#endif  // TAGTRACE_DNS_SERVER_H_
