#pragma once

#include <map>
#include <string>

namespace mkv::detail {

struct ParsedCall {
  std::string name;
  std::map<std::string, double> args;
};

std::string trim(const std::string& s);

// name  or  name(key=value, key=value)
ParsedCall parse_call(const std::string& raw);

}  // namespace mkv::detail
