#include "scdiff/config.hpp"

#include <cstdlib>
#include <sstream>
#include <stdexcept>

#include "scdiff/io.hpp"

namespace scdiff {
namespace {

std::string trim(const std::string& s) {
  std::size_t lo = s.find_first_not_of(" \t\r");
  if (lo == std::string::npos) return "";
  std::size_t hi = s.find_last_not_of(" \t\r");
  return s.substr(lo, hi - lo + 1);
}

double parse_num(const std::string& key, const std::string& raw) {
  const char* begin = raw.c_str();
  char* end = nullptr;
  double v = std::strtod(begin, &end);
  if (end == begin || *end != '\0')
    throw std::runtime_error("config: key '" + key + "' is not a number: '" + raw + "'");
  return v;
}

}  // namespace

Config Config::parse(const std::string& text) {
  Config cfg;
  std::istringstream in(text);
  std::string line;
  std::string section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (t.front() == '[') {
      if (t.back() != ']')
        throw std::runtime_error("config: line " + std::to_string(lineno) +
                                 ": unterminated section header");
      section = trim(t.substr(1, t.size() - 2));
      if (section.empty())
        throw std::runtime_error("config: line " + std::to_string(lineno) +
                                 ": empty section name");
      continue;
    }
    std::size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config: line " + std::to_string(lineno) +
                               ": expected 'key = value'");
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    if (key.empty())
      throw std::runtime_error("config: line " + std::to_string(lineno) + ": empty key");
    std::string full = section.empty() ? key : section + "." + key;
    if (cfg.values.count(full))
      throw std::runtime_error("config: duplicate key '" + full + "'");
    cfg.values[full] = value;
  }
  return cfg;
}

Config Config::load(const std::string& path) { return parse(read_text_file(path)); }

std::string Config::get_str(const std::string& key, const std::string& fallback) const {
  auto it = values.find(key);
  return it == values.end() ? fallback : it->second;
}

std::string Config::require_str(const std::string& key) const {
  auto it = values.find(key);
  if (it == values.end()) throw std::runtime_error("config: missing key '" + key + "'");
  return it->second;
}

double Config::get_num(const std::string& key, double fallback) const {
  auto it = values.find(key);
  return it == values.end() ? fallback : parse_num(key, it->second);
}

std::size_t Config::get_count(const std::string& key, std::size_t fallback) const {
  auto it = values.find(key);
  if (it == values.end()) return fallback;
  double v = parse_num(key, it->second);
  if (v < 0 || v != static_cast<double>(static_cast<std::size_t>(v)))
    throw std::runtime_error("config: key '" + key + "' is not a count: '" + it->second + "'");
  return static_cast<std::size_t>(v);
}

bool Config::get_flag(const std::string& key, bool fallback) const {
  auto it = values.find(key);
  if (it == values.end()) return fallback;
  const std::string& v = it->second;
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::runtime_error("config: key '" + key + "' is not a flag: '" + v + "'");
}

std::vector<double> Config::get_list(const std::string& key,
                                     const std::vector<double>& fallback) const {
  auto it = values.find(key);
  if (it == values.end()) return fallback;
  std::vector<double> out;
  std::istringstream in(it->second);
  std::string item;
  while (std::getline(in, item, ',')) {
    std::string t = trim(item);
    if (t.empty())
      throw std::runtime_error("config: key '" + key + "' has an empty list entry");
    out.push_back(parse_num(key, t));
  }
  if (out.empty()) throw std::runtime_error("config: key '" + key + "' is an empty list");
  return out;
}

std::vector<std::string> Config::get_names(
    const std::string& key, const std::vector<std::string>& fallback) const {
  auto it = values.find(key);
  if (it == values.end()) return fallback;
  std::vector<std::string> out;
  std::istringstream in(it->second);
  std::string item;
  while (std::getline(in, item, ',')) {
    std::string t = trim(item);
    if (t.empty())
      throw std::runtime_error("config: key '" + key + "' has an empty list entry");
    out.push_back(t);
  }
  if (out.empty()) throw std::runtime_error("config: key '" + key + "' is an empty list");
  return out;
}

std::string Config::canonical() const {
  std::string out;
  for (const auto& [k, v] : values) {
    out += k;
    out += " = ";
    out += v;
    out += "\n";
  }
  return out;
}

}  // namespace scdiff
