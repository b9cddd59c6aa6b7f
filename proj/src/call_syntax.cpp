#include "call_syntax.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

#include "mkv/error.hpp"

namespace mkv::detail {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

ParsedCall parse_call(const std::string& raw) {
  const std::string expr = trim(raw);
  ParsedCall out;
  const auto open = expr.find('(');
  if (open == std::string::npos) {
    out.name = expr;
  } else {
    if (expr.back() != ')') {
      throw Error(Errc::ConfigParse, "missing ')' in '" + expr + "'");
    }
    out.name = trim(expr.substr(0, open));
    const std::string body = expr.substr(open + 1, expr.size() - open - 2);
    std::stringstream ss(body);
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (item.empty()) continue;
      const auto eq = item.find('=');
      if (eq == std::string::npos) {
        throw Error(Errc::ConfigParse, "expected key=value, got '" + item + "'");
      }
      const std::string key = trim(item.substr(0, eq));
      const std::string val = trim(item.substr(eq + 1));
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(val, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != val.size() || val.empty()) {
        throw Error(Errc::ConfigParse, "bad number '" + val + "' for '" + key + "'");
      }
      if (!out.args.emplace(key, v).second) {
        throw Error(Errc::ConfigParse, "duplicate key '" + key + "'");
      }
    }
  }
  if (out.name.empty() ||
      !std::all_of(out.name.begin(), out.name.end(), [](unsigned char c) {
        return std::isalnum(c) || c == '_';
      })) {
    throw Error(Errc::ConfigParse, "bad function name in '" + expr + "'");
  }
  return out;
}

}  // namespace mkv::detail
