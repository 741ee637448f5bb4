#pragma once

#include <map>
#include <string>
#include <vector>

namespace scdiff {

// Flat "key = value" config with [section] headers and # comments. Keys are
// stored as "section.key"; keys before any section header have no prefix.
struct Config {
  std::map<std::string, std::string> values;

  static Config parse(const std::string& text);
  static Config load(const std::string& path);

  bool has(const std::string& key) const { return values.count(key) != 0; }
  std::string get_str(const std::string& key, const std::string& fallback) const;
  std::string require_str(const std::string& key) const;
  double get_num(const std::string& key, double fallback) const;
  std::size_t get_count(const std::string& key, std::size_t fallback) const;
  bool get_flag(const std::string& key, bool fallback) const;
  // Comma-separated numeric list; fallback when the key is absent.
  std::vector<double> get_list(const std::string& key,
                               const std::vector<double>& fallback) const;
  std::vector<std::string> get_names(
      const std::string& key, const std::vector<std::string>& fallback) const;

  // Sorted "key = value" lines; the canonical form behind config hashes.
  std::string canonical() const;
};

}  // namespace scdiff
