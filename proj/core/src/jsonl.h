// Line-delimited JSON plumbing shared by the log readers and writers.

#ifndef TAGTRACE_SRC_JSONL_H_
#define TAGTRACE_SRC_JSONL_H_

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>

#include "absl/status/status.h"
#include "json.hpp"

namespace tagtrace::internal {

using Json = nlohmann::ordered_json;

// Calls `on_record` for every non-empty line of `path`. Stops at the first
// failure and returns an error that names the 1-based line number.
absl::Status ForEachJsonLine(
    const std::string& path,
    const std::function<absl::Status(const Json&)>& on_record);

// Opens `path` for writing (truncating) and emits one compact JSON document
// per line.
class JsonLineWriter {
 public:
  explicit JsonLineWriter(std::string path) : path_(std::move(path)) {}
  void Add(const Json& record);
  absl::Status Finish();

 private:
  std::string path_;
  std::string buffer_;
};

std::string DumpCompact(const Json& j);

absl::Status RequireObject(const Json& j);
absl::Status GetString(const Json& j, std::string_view key, std::string* out);
absl::Status GetDouble(const Json& j, std::string_view key, double* out);
absl::Status GetUint(const Json& j, std::string_view key, uint64_t* out);
absl::Status GetInt(const Json& j, std::string_view key, int* out);
absl::Status GetBool(const Json& j, std::string_view key, bool* out);

absl::Status ReadWholeFile(const std::string& path, std::string* out);
absl::Status WriteWholeFile(const std::string& path, std::string_view data);

}  // namespace tagtrace::internal

#endif  // TAGTRACE_SRC_JSONL_H_
