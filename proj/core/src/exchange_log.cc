#include "tagtrace/exchange_log.h"

#include <array>

#include "absl/strings/escaping.h"
#include "jsonl.h"

namespace tagtrace {

using internal::Json;

namespace {

constexpr std::array<std::string_view, 11> kKnownFields = {
    "exchange_id",      "timestamp",       "flow_id",
    "ground_truth_client", "method",       "url",
    "request_headers",  "response_status", "response_headers",
    "response_body",    "is_encrypted"};

bool IsKnownField(std::string_view name) {
  for (std::string_view f : kKnownFields) {
    if (f == name) return true;
  }
  return false;
}

Json HeadersToJson(const HeaderList& headers) {
  Json arr = Json::array();
  for (const Header& h : headers) arr.push_back(Json::array({h.name, h.value}));
  return arr;
}

absl::Status HeadersFromJson(const Json& j, std::string_view key,
                             HeaderList* out) {
  auto it = j.find(std::string(key));
  if (it == j.end()) {
    return absl::InvalidArgumentError(
        std::string("missing field '") + std::string(key) + "'");
  }
  if (!it->is_array()) {
    return absl::InvalidArgumentError(std::string("field '") +
                                      std::string(key) + "' is not an array");
  }
  out->clear();
  for (const Json& pair : *it) {
    if (!pair.is_array() || pair.size() != 2 || !pair[0].is_string() ||
        !pair[1].is_string()) {
      return absl::InvalidArgumentError(std::string("bad header entry in '") +
                                        std::string(key) + "'");
    }
    out->push_back({pair[0].get<std::string>(), pair[1].get<std::string>()});
  }
  return absl::OkStatus();
}

Json ExchangeToJson(const HttpExchange& x) {
  Json j = Json::object();
  j["exchange_id"] = x.exchange_id;
  j["timestamp"] = x.timestamp;
  j["flow_id"] = x.flow_id;
  if (x.ground_truth_client) {
    j["ground_truth_client"] = *x.ground_truth_client;
  } else {
    j["ground_truth_client"] = nullptr;
  }
  j["method"] = x.method;
  j["url"] = x.url;
  j["request_headers"] = HeadersToJson(x.request_headers);
  j["response_status"] = x.response_status;
  j["response_headers"] = HeadersToJson(x.response_headers);
  j["response_body"] = absl::Base64Escape(x.response_body);
  j["is_encrypted"] = x.is_encrypted;
  for (const ExtraField& extra : x.extra_fields) {
    j[extra.name] = Json::parse(extra.json);
  }
  return j;
}

absl::StatusOr<HttpExchange> ExchangeFromJson(const Json& j) {
  if (absl::Status s = internal::RequireObject(j); !s.ok()) return s;
  HttpExchange x;
  absl::Status s = internal::GetUint(j, "exchange_id", &x.exchange_id);
  if (s.ok()) s = internal::GetDouble(j, "timestamp", &x.timestamp);
  if (s.ok()) s = internal::GetString(j, "flow_id", &x.flow_id);
  if (s.ok()) s = internal::GetString(j, "method", &x.method);
  if (s.ok()) s = internal::GetString(j, "url", &x.url);
  if (s.ok()) s = HeadersFromJson(j, "request_headers", &x.request_headers);
  if (s.ok()) s = internal::GetInt(j, "response_status", &x.response_status);
  if (s.ok()) s = HeadersFromJson(j, "response_headers", &x.response_headers);
  if (s.ok()) s = internal::GetBool(j, "is_encrypted", &x.is_encrypted);
  if (!s.ok()) return s;

  std::string body64;
  if (s = internal::GetString(j, "response_body", &body64); !s.ok()) return s;
  if (!absl::Base64Unescape(body64, &x.response_body)) {
    return absl::InvalidArgumentError("response_body is not valid base64");
  }

  auto gt = j.find("ground_truth_client");
  if (gt != j.end() && !gt->is_null()) {
    if (!gt->is_string()) {
      return absl::InvalidArgumentError(
          "field 'ground_truth_client' is not a string");
    }
    x.ground_truth_client = gt->get<std::string>();
  }

  if (x.is_encrypted && !x.response_body.empty()) {
    return absl::InvalidArgumentError("encrypted exchange carries a body");
  }

  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!IsKnownField(it.key())) {
      x.extra_fields.push_back({it.key(), internal::DumpCompact(it.value())});
    }
  }
  return x;
}

}  // namespace

std::string SerializeExchange(const HttpExchange& exchange) {
  return internal::DumpCompact(ExchangeToJson(exchange));
}

absl::StatusOr<HttpExchange> ParseExchange(std::string_view line) {
  Json j;
  try {
    j = Json::parse(line);
  } catch (const Json::exception& e) {
    return absl::InvalidArgumentError(std::string("malformed record: ") +
                                      e.what());
  }
  return ExchangeFromJson(j);
}

absl::StatusOr<std::vector<HttpExchange>> ReadExchangeLog(
    const std::string& path) {
  std::vector<HttpExchange> out;
  absl::Status s = internal::ForEachJsonLine(path, [&](const Json& j) {
    absl::StatusOr<HttpExchange> x = ExchangeFromJson(j);
    if (!x.ok()) return x.status();
    out.push_back(*std::move(x));
    return absl::OkStatus();
  });
  if (!s.ok()) return s;
  return out;
}

absl::Status WriteExchangeLog(std::span<const HttpExchange> exchanges,
                              const std::string& path) {
  internal::JsonLineWriter writer(path);
  for (const HttpExchange& x : exchanges) writer.Add(ExchangeToJson(x));
  return writer.Finish();
}

std::string SerializeObjectFetch(const ObjectFetchRecord& record) {
  Json j = Json::object();
  j["timestamp"] = record.timestamp;
  j["source"] = record.source;
  j["url"] = record.url;
  return internal::DumpCompact(j);
}

absl::StatusOr<std::vector<ObjectFetchRecord>> ReadObjectLog(
    const std::string& path) {
  std::vector<ObjectFetchRecord> out;
  absl::Status s = internal::ForEachJsonLine(path, [&](const Json& j) {
    if (absl::Status st = internal::RequireObject(j); !st.ok()) return st;
    ObjectFetchRecord r;
    absl::Status st = internal::GetDouble(j, "timestamp", &r.timestamp);
    if (st.ok()) st = internal::GetString(j, "source", &r.source);
    if (st.ok()) st = internal::GetString(j, "url", &r.url);
    if (!st.ok()) return st;
    out.push_back(std::move(r));
    return absl::OkStatus();
  });
  if (!s.ok()) return s;
  return out;
}

absl::Status WriteObjectLog(std::span<const ObjectFetchRecord> records,
                            const std::string& path) {
  std::string data;
  for (const ObjectFetchRecord& r : records) {
    data += SerializeObjectFetch(r);
    data += '\n';
  }
  return internal::WriteWholeFile(path, data);
}

}  // namespace tagtrace
