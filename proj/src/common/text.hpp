#pragma once

// Line-oriented helpers shared by the text file parsers.

#include <charconv>
#include <cstdlib>
#include <string>
#include <string_view>
#include <vector>

#include "bpunch/error.hpp"

namespace bpunch::text {

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    out.push_back(s.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::vector<std::string_view> tokens(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

class LineParser {
 public:
  explicit LineParser(std::size_t line) : line_(line) {}

  std::size_t count(std::string_view text, std::string_view field) const {
    std::size_t v = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size())
      throw ParseError("expected a non-negative integer, got '" + std::string(text) + "'", line_, std::string(field));
    return v;
  }

  double real(std::string_view text, std::string_view field) const {
    // from_chars for double is missing in older libstdc++; strtod is fine here.
    const std::string s(text);
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size())
      throw ParseError("expected a number, got '" + s + "'", line_, std::string(field));
    return v;
  }

  [[noreturn]] void fail(const std::string& what, std::string_view field = {}) const {
    throw ParseError(what, line_, std::string(field));
  }

 private:
  std::size_t line_;
};

}  // namespace bpunch::text
