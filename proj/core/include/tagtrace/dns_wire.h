// Minimal DNS message codec: enough to answer and issue A queries.

#ifndef TAGTRACE_DNS_WIRE_H_
#define TAGTRACE_DNS_WIRE_H_

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "absl/status/statusor.h"

namespace tagtrace::dns {

inline constexpr uint16_t kTypeA = 1;
inline constexpr uint16_t kClassIn = 1;

enum Rcode : uint8_t {
  kNoError = 0,
  kFormErr = 1,
  kServFail = 2,
  kNxDomain = 3,
  kNotImp = 4,
  kRefused = 5,
};

struct Question {
  std::string name;  // as sent, without trailing dot
  uint16_t qtype = kTypeA;
  uint16_t qclass = kClassIn;
};

struct Query {
  uint16_t id = 0;
  uint16_t flags = 0;
  Question question;
  std::string question_wire;  // raw question section, echoed in replies
};

struct ARecord {
  std::string name;
  uint32_t ttl = 0;
  std::string address;  // dotted IPv4
};

struct Response {
  uint16_t id = 0;
  uint16_t flags = 0;
  uint8_t rcode = kNoError;
  std::optional<Question> question;
  std::vector<ARecord> answers;
};

std::string EncodeQuery(uint16_t id, std::string_view name,
                        uint16_t qtype = kTypeA, bool recursion_desired = true);

// Accepts exactly one question.
absl::StatusOr<Query> ParseQuery(std::string_view packet);

// Reply echoing id, RD bit and the question; sets QR and AA. `answer_address`
// adds one A record pointing back at the question name.
std::string EncodeResponse(const Query& query, uint8_t rcode,
                           std::optional<std::string_view> answer_address,
                           uint32_t ttl);

// Error reply for a packet too malformed to parse; needs at least the id.
std::optional<std::string> EncodeFormatError(std::string_view packet);

absl::StatusOr<Response> ParseResponse(std::string_view packet);

}  // namespace tagtrace::dns

#endif  // TAGTRACE_DNS_WIRE_H_
