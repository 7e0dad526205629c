#pragma once

#include <map>
#include <string>

namespace aural {

// Flat key=value configuration. '#' starts a comment. Every key can be
// overridden by an environment variable named UA2_<KEY> (upper-cased, dots
// replaced with underscores).
class Config {
 public:
  Config() = default;
  static Config from_file(const std::string& path);
  static Config from_string(const std::string& text);

  void apply_env_overrides();

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  std::string get_str(const std::string& key, const std::string& fallback = "") const;
  double get_num(const std::string& key, double fallback) const;
  int64_t get_int(const std::string& key, int64_t fallback) const;
  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace aural
