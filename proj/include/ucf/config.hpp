#pragma once

#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>

namespace ucf {

/// Flat key=value configuration. std::map keeps serialization sorted and
/// therefore byte-stable.
using KvMap = std::map<std::string, std::string>;

inline std::string strip(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

inline KvMap parse_kv_text(const std::string& text) {
  KvMap out;
  std::istringstream in(text);
  std::string line;
  std::int64_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = strip(line);
    if (t.empty() || t[0] == '#') continue;
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(lineno) +
                                  " has no '=': " + t);
    const std::string key = strip(t.substr(0, eq));
    if (key.empty())
      throw std::invalid_argument("config line " + std::to_string(lineno) +
                                  " has an empty key");
    out[key] = strip(t.substr(eq + 1));
  }
  return out;
}

inline KvMap read_kv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_kv_text(buf.str());
}

inline std::string kv_to_text(const KvMap& kv) {
  std::ostringstream out;
  for (const auto& [k, v] : kv) out << k << '=' << v << '\n';
  return out.str();
}

inline void write_kv_file(const std::string& path, const KvMap& kv) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write config file " + path);
  out << kv_to_text(kv);
  if (!out) throw std::runtime_error("failed writing config file " + path);
}

inline bool kv_has(const KvMap& kv, const std::string& key) {
  return kv.find(key) != kv.end();
}

inline const std::string& kv_require(const KvMap& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end())
    throw std::invalid_argument("missing config key: " + key);
  return it->second;
}

inline std::string kv_get(const KvMap& kv, const std::string& key,
                          const std::string& fallback) {
  auto it = kv.find(key);
  return it == kv.end() ? fallback : it->second;
}

inline std::int64_t kv_parse_int(const std::string& key,
                                 const std::string& value) {
  char* end = nullptr;
  errno = 0;
  const long long v = std::strtoll(value.c_str(), &end, 10);
  if (errno != 0 || end == value.c_str() || *end != '\0')
    throw std::invalid_argument("config key " + key +
                                ": not an integer: " + value);
  return std::int64_t(v);
}

inline double kv_parse_double(const std::string& key,
                              const std::string& value) {
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(value.c_str(), &end);
  if (errno != 0 || end == value.c_str() || *end != '\0')
    throw std::invalid_argument("config key " + key +
                                ": not a number: " + value);
  return v;
}

inline bool kv_parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw std::invalid_argument("config key " + key +
                              ": not a boolean: " + value);
}

inline std::int64_t kv_get_int(const KvMap& kv, const std::string& key,
                               std::int64_t fallback) {
  auto it = kv.find(key);
  return it == kv.end() ? fallback : kv_parse_int(key, it->second);
}

inline double kv_get_double(const KvMap& kv, const std::string& key,
                            double fallback) {
  auto it = kv.find(key);
  return it == kv.end() ? fallback : kv_parse_double(key, it->second);
}

inline bool kv_get_bool(const KvMap& kv, const std::string& key,
                        bool fallback) {
  auto it = kv.find(key);
  return it == kv.end() ? fallback : kv_parse_bool(key, it->second);
}

}  // namespace ucf
