#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace hgt {

/// Flat key=value configuration. Files hold one `key = value` pair per
/// line ('#' comments); command-line overrides use the same `key=value`
/// form and win over the file.
class Config {
 public:
  Config() = default;

  static Config from_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("config: cannot read " + path);
    Config c;
    std::string line;
    long lineno = 0;
    while (std::getline(f, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      if (!c.apply_override(line))
        throw std::runtime_error("config: bad line " + std::to_string(lineno) +
                                 " in " + path);
    }
    return c;
  }

  /// Accepts "key=value" (spaces around '=' allowed); returns false when
  /// the string does not parse.
  bool apply_override(const std::string& kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) return false;
    std::string k = trim(kv.substr(0, eq));
    std::string v = trim(kv.substr(eq + 1));
    if (k.empty()) return false;
    values_[k] = v;
    return true;
  }

  void apply_overrides(const std::vector<std::string>& kvs) {
    for (const auto& kv : kvs)
      if (!apply_override(kv))
        throw std::runtime_error("config: bad override: " + kv);
  }

  bool has(const std::string& k) const { return values_.count(k) != 0; }

  std::string get_str(const std::string& k, const std::string& dflt) const {
    auto it = values_.find(k);
    return it == values_.end() ? dflt : it->second;
  }
  long get_long(const std::string& k, long dflt) const {
    auto it = values_.find(k);
    return it == values_.end() ? dflt : parse<long>(k, it->second);
  }
  double get_double(const std::string& k, double dflt) const {
    auto it = values_.find(k);
    return it == values_.end() ? dflt : parse<double>(k, it->second);
  }
  bool get_bool(const std::string& k, bool dflt) const {
    auto it = values_.find(k);
    if (it == values_.end()) return dflt;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw std::runtime_error("config: bad bool for " + k);
  }

  const std::map<std::string, std::string>& items() const { return values_; }

 private:
  static std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? "" : s.substr(b, e - b + 1);
  }

  template <typename T>
  static T parse(const std::string& k, const std::string& v) {
    std::istringstream ss(v);
    T out;
    if (!(ss >> out))
      throw std::runtime_error("config: bad value for " + k + ": " + v);
    return out;
  }

  std::map<std::string, std::string> values_;
};

/// Peak resident set size of this process in kilobytes (VmHWM), or 0 when
/// unavailable.
inline long peak_rss_kb() {
  std::ifstream f("/proc/self/status");
  std::string line;
  while (std::getline(f, line)) {
    if (line.rfind("VmHWM:", 0) == 0) {
      std::istringstream ss(line.substr(6));
      long kb = 0;
      ss >> kb;
      return kb;
    }
  }
  return 0;
}

/// FNV-1a over a file's bytes, for recording artifact identity in run
/// manifests.
inline std::string file_hash(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("hash: cannot read " + path);
  std::uint64_t h = 1469598103934665603ULL;
  char buf[4096];
  while (f.read(buf, sizeof(buf)) || f.gcount() > 0) {
    for (std::streamsize i = 0; i < f.gcount(); ++i) {
      h ^= std::uint64_t(std::uint8_t(buf[i]));
      h *= 1099511628211ULL;
    }
    if (!f) break;
  }
  char out[17];
  std::snprintf(out, sizeof(out), "%016llx", (unsigned long long)h);
  return out;
}

/// Run manifest: the effective configuration, seeds, and hashes of the
/// artifacts a run produced, as one `key value` pair per line.
inline void write_manifest(const std::string& path, const Config& cfg,
                           const std::map<std::string, std::string>& extra) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("manifest: cannot write " + path);
  for (const auto& [k, v] : cfg.items()) f << "config." << k << ' ' << v << '\n';
  for (const auto& [k, v] : extra) f << k << ' ' << v << '\n';
}

}  // namespace hgt
