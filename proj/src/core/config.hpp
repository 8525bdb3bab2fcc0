// Flat key=value configuration store. One line per key, '#' starts a
// comment; no sections, no nesting. CLI flags, config files and built-in
// defaults all funnel through this.
#pragma once

#include <map>
#include <string>

#include "core/common.hpp"

namespace aid {

class Config {
 public:
  void set(const std::string& key, const std::string& value) { kv_[key] = value; }
  bool has(const std::string& key) const { return kv_.count(key) != 0; }

  std::string get_str(const std::string& key, const std::string& fallback) const;
  int64_t get_int(const std::string& key, int64_t fallback) const;
  double get_real(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  void load_file(const std::string& path);
  void save_file(const std::string& path) const;

  const std::map<std::string, std::string>& entries() const { return kv_; }

 private:
  std::map<std::string, std::string> kv_;
};

}  // namespace aid
