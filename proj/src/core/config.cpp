#include "core/config.hpp"

#include <algorithm>
#include <fstream>

namespace aid {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace

std::string Config::get_str(const std::string& key, const std::string& fallback) const {
  auto it = kv_.find(key);
  return it == kv_.end() ? fallback : it->second;
}

int64_t Config::get_int(const std::string& key, int64_t fallback) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  try {
    return std::stoll(it->second);
  } catch (const std::exception&) {
    fail("config: key '" + key + "' is not an integer: " + it->second);
  }
}

double Config::get_real(const std::string& key, double fallback) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  try {
    return std::stod(it->second);
  } catch (const std::exception&) {
    fail("config: key '" + key + "' is not a number: " + it->second);
  }
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  std::string v = it->second;
  std::transform(v.begin(), v.end(), v.begin(), ::tolower);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  fail("config: key '" + key + "' is not a boolean: " + it->second);
}

void Config::load_file(const std::string& path) {
  std::ifstream in(path);
  AID_CHECK(in.good(), "config: cannot open: " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string s = trim(line);
    if (s.empty() || s[0] == '#') continue;
    size_t eq = s.find('=');
    AID_CHECK(eq != std::string::npos,
              "config: " + path + ":" + std::to_string(lineno) + ": expected key=value");
    std::string key = trim(s.substr(0, eq));
    std::string value = trim(s.substr(eq + 1));
    AID_CHECK(!key.empty(), "config: " + path + ":" + std::to_string(lineno) + ": empty key");
    kv_[key] = value;
  }
}

void Config::save_file(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  AID_CHECK(out.good(), "config: cannot open for writing: " + path);
  for (const auto& [k, v] : kv_) out << k << "=" << v << "\n";
  AID_CHECK(out.good(), "config: write failed: " + path);
}

}  // namespace aid
