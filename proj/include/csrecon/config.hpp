#pragma once

// Flat key = value run configuration with [section] headers (keys are
// flattened to "section.key"), CSRECON_ environment overrides, and the
// per-run manifest written next to every subcommand's outputs.

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "csrecon/common.hpp"

namespace csrecon {

inline constexpr const char* kToolkitVersion = "0.1.0";

class Config {
 public:
  Config() = default;

  static Config from_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("config: cannot open " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    Config cfg = from_string(ss.str());
    cfg.apply_env_overrides();
    return cfg;
  }

  static Config from_string(const std::string& text) {
    Config cfg;
    std::istringstream in(text);
    std::string line, section;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const std::string t = trim(line);
      if (t.empty() || t[0] == '#') continue;
      if (t.front() == '[' && t.back() == ']') {
        section = trim(t.substr(1, t.size() - 2));
        continue;
      }
      const auto eq = t.find('=');
      if (eq == std::string::npos)
        throw ConfigError("config: line " + std::to_string(lineno) + " is not key = value: '" +
                          t + "'");
      std::string key = trim(t.substr(0, eq));
      if (!section.empty()) key = section + "." + key;
      cfg.values_[key] = trim(t.substr(eq + 1));
    }
    return cfg;
  }

  // CSRECON_SECTION_KEY=... overrides "section.key".
  void apply_env_overrides() {
    for (auto& [key, value] : values_) {
      std::string env = "CSRECON_";
      for (char c : key)
        env += c == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
      if (const char* v = std::getenv(env.c_str())) value = v;
    }
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("config: missing required key '" + key + "'");
    return it->second;
  }

  std::string get(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  double get_real(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
      return std::stod(it->second);
    } catch (const std::exception&) {
      throw ConfigError("config: key '" + key + "' is not a number: '" + it->second + "'");
    }
  }

  long long get_int(const std::string& key, long long fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
      return std::stoll(it->second);
    } catch (const std::exception&) {
      throw ConfigError("config: key '" + key + "' is not an integer: '" + it->second + "'");
    }
  }

  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }

  std::map<std::string, std::string> values_;
};

struct RunManifest {
  std::string subcommand;
  std::string config_path;
  std::uint64_t seed = 0;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::string started_at, finished_at;
  bool deterministic = false;

  static std::string timestamp() {
    std::time_t t = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
  }

  void save(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw ConfigError("manifest: cannot open " + path);
    f << "subcommand=" << subcommand << "\n"
      << "config=" << config_path << "\n"
      << "seed=" << seed << "\n"
      << "version=" << kToolkitVersion << "\n"
      << "deterministic=" << (deterministic ? 1 : 0) << "\n"
      << "started=" << started_at << "\n"
      << "finished=" << finished_at << "\n";
    for (const auto& p : inputs) f << "input=" << p << "\n";
    for (const auto& p : outputs) f << "output=" << p << "\n";
  }
};

}  // namespace csrecon
