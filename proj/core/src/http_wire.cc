#include "tagtrace/http_wire.h"

#include <string>

#include "absl/strings/numbers.h"
#include "str_util.h"
#include "tagtrace/net.h"

namespace tagtrace {

namespace {

bool ParseHeaderBlock(std::string_view block, HeaderList* headers) {
  size_t pos = 0;
  while (pos < block.size()) {
    size_t eol = block.find("\r\n", pos);
    if (eol == std::string_view::npos) eol = block.size();
    std::string_view line = block.substr(pos, eol - pos);
    pos = eol + 2;
    if (line.empty()) continue;
    if (line.front() == ' ' || line.front() == '\t') {
      if (headers->empty()) return false;
      internal::Append(&headers->back().value, " ", TrimAscii(line));
      continue;
    }
    size_t colon = line.find(':');
    if (colon == std::string_view::npos || colon == 0) return false;
    headers->push_back({std::string(line.substr(0, colon)),
                        std::string(TrimAscii(line.substr(colon + 1)))});
  }
  return true;
}

bool IsChunked(const HeaderList& headers) {
  auto te = FindHeader(headers, "Transfer-Encoding");
  return te && ToLowerAscii(*te).find("chunked") != std::string::npos;
}

std::string SerializeHeaders(const HeaderList& headers, size_t body_size,
                             bool force_length) {
  std::string out;
  for (const Header& h : headers) {
    if (EqualsIgnoreCase(h.name, "Content-Length") ||
        EqualsIgnoreCase(h.name, "Transfer-Encoding")) {
      continue;
    }
    internal::Append(&out, h.name, ": ", h.value, "\r\n");
  }
  if (force_length || body_size > 0) {
    internal::Append(&out, "Content-Length: ", body_size, "\r\n");
  }
  out += "\r\n";
  return out;
}

}  // namespace

std::string_view ReasonPhrase(int status) {
  switch (status) {
    case 200: return "OK";
    case 204: return "No Content";
    case 301: return "Moved Permanently";
    case 302: return "Found";
    case 304: return "Not Modified";
    case 400: return "Bad Request";
    case 403: return "Forbidden";
    case 404: return "Not Found";
    case 405: return "Method Not Allowed";
    case 500: return "Internal Server Error";
    case 501: return "Not Implemented";
    case 502: return "Bad Gateway";
    case 504: return "Gateway Timeout";
    default: return "Unknown";
  }
}

std::string SerializeRequest(const HttpRequest& request) {
  std::string out =
      internal::Cat(request.method, " ", request.target, " ", request.version,
                   "\r\n");
  bool has_body = !request.body.empty() ||
                  request.method == "POST" || request.method == "PUT";
  out += SerializeHeaders(request.headers, request.body.size(), has_body);
  out += request.body;
  return out;
}

std::string SerializeResponse(const HttpResponse& response) {
  std::string out = internal::Cat(response.version, " ", response.status, " ",
                                 response.reason, "\r\n");
  bool bodyless = response.status == 204 || response.status == 304 ||
                  (response.status >= 100 && response.status < 200);
  out += SerializeHeaders(response.headers, response.body.size(), !bodyless);
  out += response.body;
  return out;
}

HttpResponse MakeErrorResponse(int status, std::string_view detail) {
  HttpResponse r;
  r.status = status;
  r.reason = std::string(ReasonPhrase(status));
  r.headers = {{"Content-Type", "text/plain"}, {"Connection", "close"}};
  r.body = internal::Cat(status, " ", r.reason, ": ", detail, "\n");
  return r;
}

bool WantsClose(std::string_view version, const HeaderList& headers) {
  auto conn = FindHeader(headers, "Connection");
  if (conn) {
    std::string v = ToLowerAscii(*conn);
    if (v.find("close") != std::string::npos) return true;
    if (v.find("keep-alive") != std::string::npos) return false;
  }
  return version != "HTTP/1.1";
}

absl::Status HttpStreamReader::Fill() {
  char buf[16384];
  absl::StatusOr<size_t> n = net::RecvSome(fd_, buf, sizeof(buf), timeout_ms_);
  if (!n.ok()) return n.status();
  if (*n == 0) {
    eof_ = true;
    return absl::OkStatus();
  }
  buffer_.append(buf, *n);
  return absl::OkStatus();
}

absl::StatusOr<std::optional<std::string>> HttpStreamReader::ReadHead() {
  while (true) {
    size_t end = buffer_.find("\r\n\r\n");
    if (end != std::string::npos) {
      std::string head = buffer_.substr(0, end);
      buffer_.erase(0, end + 4);
      return std::optional<std::string>(std::move(head));
    }
    if (buffer_.size() > kMaxHeadBytes) {
      return absl::ResourceExhaustedError("header block too large");
    }
    if (eof_) {
      if (buffer_.empty()) return std::optional<std::string>();
      return absl::InvalidArgumentError("connection closed inside headers");
    }
    if (absl::Status s = Fill(); !s.ok()) return s;
  }
}

absl::StatusOr<std::string> HttpStreamReader::ReadExact(size_t n) {
  if (n > kMaxBodyBytes) return absl::ResourceExhaustedError("body too large");
  while (buffer_.size() < n) {
    if (eof_) return absl::InvalidArgumentError("connection closed inside body");
    if (absl::Status s = Fill(); !s.ok()) return s;
  }
  std::string out = buffer_.substr(0, n);
  buffer_.erase(0, n);
  return out;
}

absl::StatusOr<std::string> HttpStreamReader::ReadLine() {
  while (true) {
    size_t eol = buffer_.find("\r\n");
    if (eol != std::string::npos) {
      std::string line = buffer_.substr(0, eol);
      buffer_.erase(0, eol + 2);
      return line;
    }
    if (eof_) return absl::InvalidArgumentError("connection closed mid-line");
    if (absl::Status s = Fill(); !s.ok()) return s;
  }
}

absl::StatusOr<std::string> HttpStreamReader::ReadChunked() {
  std::string body;
  while (true) {
    absl::StatusOr<std::string> line = ReadLine();
    if (!line.ok()) return line.status();
    std::string_view size_text = *line;
    size_text = TrimAscii(size_text.substr(0, size_text.find(';')));
    size_t size = 0;
    if (size_text.empty() || size_text.size() > 15 ||
        size_text.find_first_not_of("0123456789abcdefABCDEF") !=
            std::string_view::npos) {
      return absl::InvalidArgumentError("bad chunk size");
    }
    size = std::stoull(std::string(size_text), nullptr, 16);
    if (size == 0) break;
    if (body.size() + size > kMaxBodyBytes) {
      return absl::ResourceExhaustedError("body too large");
    }
    absl::StatusOr<std::string> chunk = ReadExact(size);
    if (!chunk.ok()) return chunk.status();
    body += *chunk;
    absl::StatusOr<std::string> crlf = ReadLine();
    if (!crlf.ok()) return crlf.status();
  }
  // Trailers.
  while (true) {
    absl::StatusOr<std::string> line = ReadLine();
    if (!line.ok()) return line.status();
    if (line->empty()) break;
  }
  return body;
}

absl::StatusOr<std::string> HttpStreamReader::ReadToEof() {
  while (!eof_) {
    if (buffer_.size() > kMaxBodyBytes) {
      return absl::ResourceExhaustedError("body too large");
    }
    if (absl::Status s = Fill(); !s.ok()) return s;
  }
  return std::exchange(buffer_, {});
}

absl::StatusOr<std::optional<HttpRequest>> HttpStreamReader::ReadRequest() {
  absl::StatusOr<std::optional<std::string>> head = ReadHead();
  if (!head.ok()) return head.status();
  if (!head->has_value()) return std::optional<HttpRequest>();
  std::string_view text = **head;

  size_t eol = text.find("\r\n");
  std::string_view request_line = text.substr(0, eol);
  HttpRequest req;
  size_t sp1 = request_line.find(' ');
  size_t sp2 = request_line.rfind(' ');
  if (sp1 == std::string_view::npos || sp1 == sp2) {
    return absl::InvalidArgumentError("malformed request line");
  }
  req.method = std::string(request_line.substr(0, sp1));
  req.target = std::string(TrimAscii(request_line.substr(sp1 + 1, sp2 - sp1 - 1)));
  req.version = std::string(request_line.substr(sp2 + 1));
  if (req.method.empty() || req.target.empty() ||
      !req.version.starts_with("HTTP/1.")) {
    return absl::InvalidArgumentError("malformed request line");
  }
  if (eol != std::string_view::npos &&
      !ParseHeaderBlock(text.substr(eol + 2), &req.headers)) {
    return absl::InvalidArgumentError("malformed header");
  }

  if (IsChunked(req.headers)) {
    absl::StatusOr<std::string> body = ReadChunked();
    if (!body.ok()) return body.status();
    req.body = *std::move(body);
  } else if (auto len = FindHeader(req.headers, "Content-Length")) {
    size_t n = 0;
    if (!absl::SimpleAtoi(std::string(*len), &n)) {
      return absl::InvalidArgumentError("bad Content-Length");
    }
    absl::StatusOr<std::string> body = ReadExact(n);
    if (!body.ok()) return body.status();
    req.body = *std::move(body);
  }
  return std::optional<HttpRequest>(std::move(req));
}

absl::StatusOr<HttpResponse> HttpStreamReader::ReadResponse(
    std::string_view request_method) {
  absl::StatusOr<std::optional<std::string>> head = ReadHead();
  if (!head.ok()) return head.status();
  if (!head->has_value()) {
    return absl::UnavailableError("upstream closed without a response");
  }
  std::string_view text = **head;
  size_t eol = text.find("\r\n");
  std::string_view status_line = text.substr(0, eol);

  HttpResponse resp;
  size_t sp1 = status_line.find(' ');
  if (sp1 == std::string_view::npos) {
    return absl::InvalidArgumentError("malformed status line");
  }
  resp.version = std::string(status_line.substr(0, sp1));
  std::string_view rest = status_line.substr(sp1 + 1);
  size_t sp2 = rest.find(' ');
  if (!absl::SimpleAtoi(std::string(rest.substr(0, sp2)), &resp.status)) {
    return absl::InvalidArgumentError("malformed status code");
  }
  resp.reason =
      sp2 == std::string_view::npos ? "" : std::string(rest.substr(sp2 + 1));
  if (eol != std::string_view::npos &&
      !ParseHeaderBlock(text.substr(eol + 2), &resp.headers)) {
    return absl::InvalidArgumentError("malformed header");
  }

  bool bodyless = request_method == "HEAD" || resp.status == 204 ||
                  resp.status == 304 || (resp.status >= 100 && resp.status < 200);
  if (bodyless) return resp;

  absl::StatusOr<std::string> body;
  if (IsChunked(resp.headers)) {
    body = ReadChunked();
  } else if (auto len = FindHeader(resp.headers, "Content-Length")) {
    size_t n = 0;
    if (!absl::SimpleAtoi(std::string(*len), &n)) {
      return absl::InvalidArgumentError("bad Content-Length");
    }
    body = ReadExact(n);
  } else {
    body = ReadToEof();
  }
  if (!body.ok()) return body.status();
  resp.body = *std::move(body);
  return resp;
}

}  // namespace tagtrace
