#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

namespace jaa {

// Line-oriented config: "[section]" headers, "key = value" entries, '#'
// comments. Keys are flattened to "section.key". Overrides ("a.b=c") win over
// file values. Unknown keys are rejected against an allow-list.
class Config {
 public:
  static Config parse_file(const std::string& path);
  static Config parse_text(const std::string& text);

  void apply_override(const std::string& dotted);  // "key=value"

  bool has(const std::string& key) const { return kv_.count(key) != 0; }
  std::string get(const std::string& key, const std::string& def) const;
  int get_int(const std::string& key, int def) const;
  double get_double(const std::string& key, double def) const;
  bool get_bool(const std::string& key, bool def) const;

  // Throws listing every key not in `allowed`.
  void check_known(const std::set<std::string>& allowed) const;

  // Deterministic "key = value" dump of the effective configuration.
  std::string snapshot() const;

  const std::map<std::string, std::string>& entries() const { return kv_; }

 private:
  std::map<std::string, std::string> kv_;
};

}  // namespace jaa
