/*
 * Copyright 2026 The softalign Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Plain-text key=value configuration files.
//
//   # comment
//   key = value
//   [section name]
//   key = value        (belongs to "section name")
//
// Keys may repeat; callers decide whether repetition is meaningful.

#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "softalign/common.hpp"

namespace softalign {

struct ConfigEntry {
  std::string section;  // "" for the top level
  std::string key;
  std::string value;
  int line = 0;
};

class KeyValueConfig {
 public:
  KeyValueConfig() = default;

  static KeyValueConfig parse(std::string_view text, std::string_view origin = "<string>") {
    KeyValueConfig cfg;
    cfg.origin_ = std::string(origin);
    std::string section;
    int line_no = 0;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
      ++line_no;
      if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
      const std::string t = trim(line);
      if (t.empty()) continue;
      if (t.front() == '[') {
        if (t.back() != ']')
          throw ConfigError(cfg.where(line_no) + "unterminated section header");
        section = trim(std::string_view(t).substr(1, t.size() - 2));
        cfg.sections_.push_back(section);
        continue;
      }
      const auto eq = t.find('=');
      if (eq == std::string::npos) throw ConfigError(cfg.where(line_no) + "expected key = value");
      ConfigEntry e{section, trim(std::string_view(t).substr(0, eq)),
                    trim(std::string_view(t).substr(eq + 1)), line_no};
      if (e.key.empty()) throw ConfigError(cfg.where(line_no) + "empty key");
      cfg.entries_.push_back(std::move(e));
    }
    return cfg;
  }

  static KeyValueConfig load(const std::string& path) {
    auto in = open_in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path);
  }

  const std::vector<ConfigEntry>& entries() const { return entries_; }
  const std::vector<std::string>& sections() const { return sections_; }

  /// Last value of `key` in `section` (later lines override earlier ones).
  std::optional<std::string> get(std::string_view key, std::string_view section = "") const {
    std::optional<std::string> out;
    for (const auto& e : entries_)
      if (e.section == section && e.key == key) out = e.value;
    return out;
  }

  std::vector<std::string> get_all(std::string_view key, std::string_view section = "") const {
    std::vector<std::string> out;
    for (const auto& e : entries_)
      if (e.section == section && e.key == key) out.push_back(e.value);
    return out;
  }

  /// Overrides (or adds) a top-level key, e.g. from a command-line flag.
  void set(std::string key, std::string value, std::string section = "") {
    entries_.push_back(ConfigEntry{std::move(section), std::move(key), std::move(value), 0});
  }

  template <class T>
  T get_or(std::string_view key, T fallback, std::string_view section = "") const {
    const auto v = get(key, section);
    if (!v) return fallback;
    return convert<T>(*v, key);
  }

  template <class T>
  T require(std::string_view key, std::string_view section = "") const {
    const auto v = get(key, section);
    if (!v) throw ConfigError(origin_ + ": missing required key '" + std::string(key) + "'");
    return convert<T>(*v, key);
  }

  template <class T>
  T convert(const std::string& v, std::string_view key) const {
    try {
      if constexpr (std::is_same_v<T, std::string>) {
        return v;
      } else if constexpr (std::is_same_v<T, bool>) {
        if (v == "true" || v == "1" || v == "yes") return true;
        if (v == "false" || v == "0" || v == "no") return false;
        throw std::invalid_argument(v);
      } else if constexpr (std::is_floating_point_v<T>) {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return static_cast<T>(d);
      } else if constexpr (std::is_integral_v<T>) {
        std::size_t pos = 0;
        const long long x = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        if constexpr (std::is_unsigned_v<T>) {
          if (x < 0) throw std::invalid_argument(v);
        }
        return static_cast<T>(x);
      } else {
        static_assert(sizeof(T) == 0, "unsupported config value type");
      }
    } catch (const std::logic_error&) {
      throw ConfigError(origin_ + ": bad value '" + v + "' for key '" + std::string(key) + "'");
    }
  }

  const std::string& origin() const { return origin_; }

 private:
  std::string where(int line) const { return origin_ + ":" + std::to_string(line) + ": "; }

  std::string origin_ = "<string>";
  std::vector<ConfigEntry> entries_;
  std::vector<std::string> sections_;
};

inline std::vector<double> parse_doubles(const std::string& s, std::string_view what) {
  std::vector<double> out;
  for (const auto& tok : split_whitespace(s)) {
    try {
      std::size_t pos = 0;
      out.push_back(std::stod(tok, &pos));
      if (pos != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::logic_error&) {
      throw ConfigError("bad number '" + tok + "' in " + std::string(what));
    }
  }
  return out;
}

}  // namespace softalign
