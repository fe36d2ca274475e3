#include "jsonl.h"

#include <fstream>
#include <sstream>

#include "str_util.h"

namespace tagtrace::internal {

absl::Status ForEachJsonLine(
    const std::string& path,
    const std::function<absl::Status(const Json&)>& on_record) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return absl::NotFoundError(internal::Cat("cannot open ", path));
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    Json record;
    try {
      record = Json::parse(line);
    } catch (const Json::exception& e) {
      return absl::InvalidArgumentError(
          internal::Cat(path, ":", line_no, ": malformed record: ", e.what()));
    }
    absl::Status s = on_record(record);
    if (!s.ok()) {
      return absl::Status(s.code(),
                          internal::Cat(path, ":", line_no, ": ", s.message()));
    }
  }
  return absl::OkStatus();
}

std::string DumpCompact(const Json& j) {
  return j.dump(-1, ' ', false, Json::error_handler_t::replace);
}

void JsonLineWriter::Add(const Json& record) {
  buffer_ += DumpCompact(record);
  buffer_ += '\n';
}

absl::Status JsonLineWriter::Finish() { return WriteWholeFile(path_, buffer_); }

absl::Status RequireObject(const Json& j) {
  if (!j.is_object()) return absl::InvalidArgumentError("record is not an object");
  return absl::OkStatus();
}

namespace {

absl::Status Missing(std::string_view key) {
  return absl::InvalidArgumentError(internal::Cat("missing field '", key, "'"));
}

absl::Status WrongType(std::string_view key, std::string_view want) {
  return absl::InvalidArgumentError(
      internal::Cat("field '", key, "' is not a ", want));
}

}  // namespace

absl::Status GetString(const Json& j, std::string_view key, std::string* out) {
  auto it = j.find(std::string(key));
  if (it == j.end()) return Missing(key);
  if (!it->is_string()) return WrongType(key, "string");
  *out = it->get<std::string>();
  return absl::OkStatus();
}

absl::Status GetDouble(const Json& j, std::string_view key, double* out) {
  auto it = j.find(std::string(key));
  if (it == j.end()) return Missing(key);
  if (!it->is_number()) return WrongType(key, "number");
  *out = it->get<double>();
  return absl::OkStatus();
}

absl::Status GetUint(const Json& j, std::string_view key, uint64_t* out) {
  auto it = j.find(std::string(key));
  if (it == j.end()) return Missing(key);
  if (!it->is_number_unsigned()) return WrongType(key, "non-negative integer");
  *out = it->get<uint64_t>();
  return absl::OkStatus();
}

absl::Status GetInt(const Json& j, std::string_view key, int* out) {
  auto it = j.find(std::string(key));
  if (it == j.end()) return Missing(key);
  if (!it->is_number_integer()) return WrongType(key, "integer");
  *out = it->get<int>();
  return absl::OkStatus();
}

absl::Status GetBool(const Json& j, std::string_view key, bool* out) {
  auto it = j.find(std::string(key));
  if (it == j.end()) return Missing(key);
  if (!it->is_boolean()) return WrongType(key, "boolean");
  *out = it->get<bool>();
  return absl::OkStatus();
}

absl::Status ReadWholeFile(const std::string& path, std::string* out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return absl::NotFoundError(internal::Cat("cannot open ", path));
  std::ostringstream ss;
  ss << in.rdbuf();
  *out = std::move(ss).str();
  return absl::OkStatus();
}

absl::Status WriteWholeFile(const std::string& path, std::string_view data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) return absl::UnavailableError(internal::Cat("cannot write ", path));
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  out.flush();
  if (!out) return absl::DataLossError(internal::Cat("short write to ", path));
  return absl::OkStatus();
}

}  // namespace tagtrace::internal
