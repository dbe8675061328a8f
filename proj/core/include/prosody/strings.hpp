#pragma once

#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>

namespace prosody {

namespace detail {

inline void fmt_append(std::ostream& out, std::string_view& pattern) {
  out << pattern;
  pattern = {};
}

template <typename Arg, typename... Rest>
void fmt_append(std::ostream& out, std::string_view& pattern, Arg&& arg,
                Rest&&... rest) {
  const std::size_t pos = pattern.find("{}");
  if (pos == std::string_view::npos) {
    out << pattern;
    pattern = {};
    return;
  }
  out << pattern.substr(0, pos) << arg;
  pattern.remove_prefix(pos + 2);
  fmt_append(out, pattern, std::forward<Rest>(rest)...);
}

}  // namespace detail

/// Minimal message formatter: each "{}" in the pattern is replaced by the
/// next argument, streamed with operator<<. No width/precision specs; use
/// format_double for value-exact numbers.
template <typename... Args>
std::string fmt(std::string_view pattern, Args&&... args) {
  std::ostringstream out;
  std::string_view rest = pattern;
  detail::fmt_append(out, rest, std::forward<Args>(args)...);
  return std::move(out).str();
}

}  // namespace prosody
