// StrCat/StrAppend that also take std::string_view (this absl build keeps
// its own string_view type).

#ifndef TAGTRACE_SRC_STR_UTIL_H_
#define TAGTRACE_SRC_STR_UTIL_H_

#include <string>
#include <string_view>
#include <type_traits>

#include "absl/strings/str_cat.h"

namespace tagtrace::internal {

template <typename T>
decltype(auto) Piece(const T& v) {
  if constexpr (std::is_same_v<T, std::string_view>) {
    return absl::string_view(v.data(), v.size());
  } else {
    return (v);
  }
}

template <typename... Args>
std::string Cat(const Args&... args) {
  return absl::StrCat(Piece(args)...);
}

template <typename... Args>
void Append(std::string* out, const Args&... args) {
  absl::StrAppend(out, Piece(args)...);
}

inline std::string_view View(absl::string_view s) { return {s.data(), s.size()}; }

}  // namespace tagtrace::internal

#endif  // TAGTRACE_SRC_STR_UTIL_H_
