// Line-delimited JSON logs for HttpExchange and ObjectFetchRecord.
//
// Exchange record fields use the HttpExchange member names. Headers are
// arrays of [name, value] pairs in original order, the response body is
// base64, and an absent ground_truth_client is written as null. Fields this
// version does not know are carried through a read/write cycle after the
// known ones, in their original order.

#ifndef TAGTRACE_EXCHANGE_LOG_H_
#define TAGTRACE_EXCHANGE_LOG_H_

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "tagtrace/http_model.h"

namespace tagtrace {

std::string SerializeExchange(const HttpExchange& exchange);
absl::StatusOr<HttpExchange> ParseExchange(std::string_view line);

// On any malformed line the whole read fails; the error names the line.
absl::StatusOr<std::vector<HttpExchange>> ReadExchangeLog(
    const std::string& path);
absl::Status WriteExchangeLog(std::span<const HttpExchange> exchanges,
                              const std::string& path);

std::string SerializeObjectFetch(const ObjectFetchRecord& record);
absl::StatusOr<std::vector<ObjectFetchRecord>> ReadObjectLog(
    const std::string& path);
absl::Status WriteObjectLog(std::span<const ObjectFetchRecord> records,
                            const std::string& path);

}  // namespace tagtrace

#endif  // TAGTRACE_EXCHANGE_LOG_H_
