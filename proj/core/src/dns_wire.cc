#include "tagtrace/dns_wire.h"

#include <arpa/inet.h>

#include <cstring>

#include "absl/strings/str_cat.h"

namespace tagtrace::dns {

namespace {

constexpr size_t kHeaderSize = 12;
constexpr uint16_t kFlagQr = 0x8000;
constexpr uint16_t kFlagAa = 0x0400;
constexpr uint16_t kFlagRd = 0x0100;

void Put16(std::string& out, uint16_t v) {
  out += static_cast<char>(v >> 8);
  out += static_cast<char>(v & 0xff);
}

void Put32(std::string& out, uint32_t v) {
  Put16(out, static_cast<uint16_t>(v >> 16));
  Put16(out, static_cast<uint16_t>(v & 0xffff));
}

uint16_t Get16(std::string_view p, size_t at) {
  return static_cast<uint16_t>((static_cast<uint8_t>(p[at]) << 8) |
                               static_cast<uint8_t>(p[at + 1]));
}

uint32_t Get32(std::string_view p, size_t at) {
  return (static_cast<uint32_t>(Get16(p, at)) << 16) | Get16(p, at + 2);
}

void PutName(std::string& out, std::string_view name) {
  if (!name.empty() && name.back() == '.') name.remove_suffix(1);
  size_t start = 0;
  while (start < name.size()) {
    size_t dot = name.find('.', start);
    if (dot == std::string_view::npos) dot = name.size();
    std::string_view label = name.substr(start, dot - start);
    out += static_cast<char>(label.size());
    out.append(label);
    start = dot + 1;
  }
  out += '\0';
}

// Reads a possibly compressed name starting at *pos; advances *pos past the
// in-place encoding.
absl::StatusOr<std::string> ReadName(std::string_view p, size_t* pos) {
  std::string name;
  size_t at = *pos;
  bool jumped = false;
  int hops = 0;
  while (true) {
    if (at >= p.size()) return absl::InvalidArgumentError("name overruns packet");
    uint8_t len = static_cast<uint8_t>(p[at]);
    if ((len & 0xc0) == 0xc0) {
      if (at + 1 >= p.size() || ++hops > 16) {
        return absl::InvalidArgumentError("bad compression pointer");
      }
      size_t target = ((len & 0x3f) << 8) | static_cast<uint8_t>(p[at + 1]);
      if (!jumped) *pos = at + 2;
      jumped = true;
      at = target;
      continue;
    }
    if ((len & 0xc0) != 0) return absl::InvalidArgumentError("bad label type");
    if (len == 0) {
      if (!jumped) *pos = at + 1;
      return name;
    }
    if (at + 1 + len > p.size()) {
      return absl::InvalidArgumentError("label overruns packet");
    }
    if (!name.empty()) name += '.';
    name.append(p.substr(at + 1, len));
    if (name.size() > 255) return absl::InvalidArgumentError("name too long");
    at += 1 + len;
  }
}

absl::StatusOr<Question> ReadQuestion(std::string_view p, size_t* pos) {
  absl::StatusOr<std::string> name = ReadName(p, pos);
  if (!name.ok()) return name.status();
  if (*pos + 4 > p.size()) return absl::InvalidArgumentError("short question");
  Question q{*std::move(name), Get16(p, *pos), Get16(p, *pos + 2)};
  *pos += 4;
  return q;
}

}  // namespace

std::string EncodeQuery(uint16_t id, std::string_view name, uint16_t qtype,
                        bool recursion_desired) {
  std::string out;
  Put16(out, id);
  Put16(out, recursion_desired ? kFlagRd : 0);
  Put16(out, 1);
  Put16(out, 0);
  Put16(out, 0);
  Put16(out, 0);
  PutName(out, name);
  Put16(out, qtype);
  Put16(out, kClassIn);
  return out;
}

absl::StatusOr<Query> ParseQuery(std::string_view packet) {
  if (packet.size() < kHeaderSize) {
    return absl::InvalidArgumentError("packet shorter than header");
  }
  Query q;
  q.id = Get16(packet, 0);
  q.flags = Get16(packet, 2);
  if (q.flags & kFlagQr) return absl::InvalidArgumentError("not a query");
  if (Get16(packet, 4) != 1) {
    return absl::InvalidArgumentError("expected exactly one question");
  }
  size_t pos = kHeaderSize;
  absl::StatusOr<Question> question = ReadQuestion(packet, &pos);
  if (!question.ok()) return question.status();
  q.question = *std::move(question);
  q.question_wire = std::string(packet.substr(kHeaderSize, pos - kHeaderSize));
  return q;
}

std::string EncodeResponse(const Query& query, uint8_t rcode,
                           std::optional<std::string_view> answer_address,
                           uint32_t ttl) {
  in_addr addr{};
  bool answer = answer_address.has_value() &&
                inet_pton(AF_INET, std::string(*answer_address).c_str(),
                          &addr) == 1;
  std::string out;
  Put16(out, query.id);
  Put16(out, static_cast<uint16_t>(kFlagQr | kFlagAa | (query.flags & kFlagRd) |
                                   (rcode & 0x0f)));
  Put16(out, 1);
  Put16(out, answer ? 1 : 0);
  Put16(out, 0);
  Put16(out, 0);
  out += query.question_wire;
  if (answer) {
    Put16(out, 0xc000 | kHeaderSize);  // pointer to the question name
    Put16(out, kTypeA);
    Put16(out, kClassIn);
    Put32(out, ttl);
    Put16(out, 4);
    out.append(reinterpret_cast<const char*>(&addr.s_addr), 4);
  }
  return out;
}

std::optional<std::string> EncodeFormatError(std::string_view packet) {
  if (packet.size() < 2) return std::nullopt;
  std::string out;
  out.append(packet.substr(0, 2));
  Put16(out, kFlagQr | kFormErr);
  Put16(out, 0);
  Put16(out, 0);
  Put16(out, 0);
  Put16(out, 0);
  return out;
}

absl::StatusOr<Response> ParseResponse(std::string_view packet) {
  if (packet.size() < kHeaderSize) {
    return absl::InvalidArgumentError("packet shorter than header");
  }
  Response r;
  r.id = Get16(packet, 0);
  r.flags = Get16(packet, 2);
  r.rcode = static_cast<uint8_t>(r.flags & 0x0f);
  if (!(r.flags & kFlagQr)) return absl::InvalidArgumentError("not a response");
  uint16_t qdcount = Get16(packet, 4);
  uint16_t ancount = Get16(packet, 6);
  size_t pos = kHeaderSize;
  for (uint16_t i = 0; i < qdcount; ++i) {
    absl::StatusOr<Question> q = ReadQuestion(packet, &pos);
    if (!q.ok()) return q.status();
    if (i == 0) r.question = *std::move(q);
  }
  for (uint16_t i = 0; i < ancount; ++i) {
    absl::StatusOr<std::string> name = ReadName(packet, &pos);
    if (!name.ok()) return name.status();
    if (pos + 10 > packet.size()) {
      return absl::InvalidArgumentError("short resource record");
    }
    uint16_t type = Get16(packet, pos);
    uint16_t klass = Get16(packet, pos + 2);
    uint32_t ttl = Get32(packet, pos + 4);
    uint16_t rdlen = Get16(packet, pos + 8);
    pos += 10;
    if (pos + rdlen > packet.size()) {
      return absl::InvalidArgumentError("rdata overruns packet");
    }
    if (type == kTypeA && klass == kClassIn && rdlen == 4) {
      in_addr addr{};
      std::memcpy(&addr.s_addr, packet.data() + pos, 4);
      char buf[INET_ADDRSTRLEN] = {};
      inet_ntop(AF_INET, &addr, buf, sizeof(buf));
      r.answers.push_back({*std::move(name), ttl, buf});
    }
    pos += rdlen;
  }
  return r;
}

}  // namespace tagtrace::dns
