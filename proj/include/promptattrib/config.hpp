#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace promptattrib {

// Flat key=value document with dotted keys. '#' starts a comment line.
// Later assignments override earlier ones, so command-line overrides are
// applied with set() after loading the file.
class Config {
 public:
  static Config parse(std::string_view text, std::string_view source = "<memory>");
  static Config load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value);
  // Parses "key=value".
  void set_assignment(std::string_view assignment);
  bool has(const std::string& key) const { return entries_.count(key) != 0; }
  std::optional<std::string> find(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  // Comma-separated list; empty items are dropped.
  std::vector<std::string> get_list(const std::string& key,
                                    const std::vector<std::string>& fallback) const;

  // Throws UsageError naming the first key not in `known`.
  void require_known(const std::vector<std::string>& known) const;

  // Sorted key=value lines; parse(dump()) reproduces the config.
  std::string dump() const;
  const std::map<std::string, std::string>& entries() const { return entries_; }

 private:
  std::map<std::string, std::string> entries_;
};

}  // namespace promptattrib
