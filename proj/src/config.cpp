#include "aural/config.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace aural {

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string env_name_for(const std::string& key) {
  std::string out = "UA2_";
  for (char c : key) {
    if (c == '.' || c == '-') out.push_back('_');
    else out.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  }
  return out;
}

}  // namespace

Config Config::from_string(const std::string& text) {
  Config cfg;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error("config line missing '=': " + line);
    }
    cfg.values_[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return cfg;
}

Config Config::from_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config: " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  Config cfg = from_string(ss.str());
  cfg.apply_env_overrides();
  return cfg;
}

void Config::apply_env_overrides() {
  // Overrides apply to known keys; unknown UA2_ variables are ignored.
  for (auto& [key, value] : values_) {
    if (const char* env = std::getenv(env_name_for(key).c_str())) value = env;
  }
}

std::string Config::get_str(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double Config::get_num(const std::string& key, double fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  return std::stod(it->second);
}

int64_t Config::get_int(const std::string& key, int64_t fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  return std::stoll(it->second);
}

}  // namespace aural
