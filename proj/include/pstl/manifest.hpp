#pragma once

// Key/value manifest files: "key: value" lines, '#' comments, and a
// mandatory "format: <name>" first line.

#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "pstl/common.hpp"

namespace pstl::detail {

inline std::vector<std::pair<std::string, std::string>> read_manifest_lines(
    const std::string& path, const std::string& expect_format) {
  std::ifstream in(path);
  require(in.good(), errc::missing_input, "cannot open manifest '" + path + "'");
  std::vector<std::pair<std::string, std::string>> entries;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto colon = line.find(':');
    require(colon != std::string::npos, errc::format,
            "malformed manifest line in '" + path + "': " + line);
    std::string key = line.substr(0, colon);
    std::string value = line.substr(colon + 1);
    while (!value.empty() && value.front() == ' ') value.erase(value.begin());
    if (first) {
      require(key == "format" && value == expect_format, errc::format,
              "manifest '" + path + "' is not " + expect_format);
      first = false;
      continue;
    }
    entries.emplace_back(std::move(key), std::move(value));
  }
  require(!first, errc::format, "manifest '" + path + "' is empty");
  return entries;
}

template <typename T>
std::vector<T> parse_int_list(const std::string& s, const char* what) {
  std::vector<T> out;
  std::istringstream is(s);
  long long v;
  while (is >> v) out.push_back(static_cast<T>(v));
  require(!is.fail() || is.eof(), errc::format, std::string("malformed ") + what + " list");
  return out;
}

}  // namespace pstl::detail
