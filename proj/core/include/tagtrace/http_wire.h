// HTTP/1.1 message framing over a connected socket.
//
// Bodies are always assembled before they are handed back: chunked transfer
// coding is decoded, and serialization always emits Content-Length.

#ifndef TAGTRACE_HTTP_WIRE_H_
#define TAGTRACE_HTTP_WIRE_H_

#include <optional>
#include <string>
#include <string_view>
#include <utility>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "tagtrace/http_model.h"

namespace tagtrace {

struct HttpRequest {
  std::string method;
  std::string target;  // absolute-form, origin-form or authority-form
  std::string version = "HTTP/1.1";
  HeaderList headers;
  std::string body;
};

struct HttpResponse {
  std::string version = "HTTP/1.1";
  int status = 200;
  std::string reason = "OK";
  HeaderList headers;
  std::string body;
};

std::string_view ReasonPhrase(int status);

// Hop-by-hop framing headers (Transfer-Encoding, Content-Length) are
// replaced with a Content-Length matching the body.
std::string SerializeRequest(const HttpRequest& request);
std::string SerializeResponse(const HttpResponse& response);

HttpResponse MakeErrorResponse(int status, std::string_view detail);

class HttpStreamReader {
 public:
  static constexpr size_t kMaxHeadBytes = 64 * 1024;
  static constexpr size_t kMaxBodyBytes = 64 * 1024 * 1024;

  explicit HttpStreamReader(int fd, int timeout_ms = 10000)
      : fd_(fd), timeout_ms_(timeout_ms) {}

  // nullopt on a clean close before any byte of a new request.
  absl::StatusOr<std::optional<HttpRequest>> ReadRequest();

  // `request_method` decides whether a body may follow (HEAD never has one).
  absl::StatusOr<HttpResponse> ReadResponse(std::string_view request_method);

  // Bytes read past the last parsed message (pipelined data, tunnel payload).
  std::string TakeBuffered() { return std::exchange(buffer_, {}); }

 private:
  absl::Status Fill();
  absl::StatusOr<std::optional<std::string>> ReadHead();
  absl::StatusOr<std::string> ReadExact(size_t n);
  absl::StatusOr<std::string> ReadChunked();
  absl::StatusOr<std::string> ReadLine();
  absl::StatusOr<std::string> ReadToEof();

  int fd_;
  int timeout_ms_;
  std::string buffer_;
  bool eof_ = false;
};

// True when the sender asked to close after this message.
bool WantsClose(std::string_view version, const HeaderList& headers);

}  // namespace tagtrace

#endif  // TAGTRACE_HTTP_WIRE_H_
