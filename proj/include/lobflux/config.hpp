#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lobflux/grid.hpp"

namespace lobflux {

// INI-style run configuration: `[section]` headers (dots allowed, e.g.
// [coefficients.bid]), `key = value` entries, `#` comments. Parsing is
// strict: keys outside the registry of known settings are rejected, values
// are type-checked on access, and the fully resolved document is written
// next to every run's outputs.
class Config {
 public:
  static Config parse(const std::string& text);
  static Config parse_file(const std::string& path);

  bool has(const std::string& section, const std::string& key) const;
  std::string get_string(const std::string& section, const std::string& key) const;
  std::string get_string_or(const std::string& section, const std::string& key,
                            const std::string& fallback) const;
  double get_double(const std::string& section, const std::string& key) const;
  double get_double_or(const std::string& section, const std::string& key, double fallback) const;
  long long get_int(const std::string& section, const std::string& key) const;
  long long get_int_or(const std::string& section, const std::string& key, long long fallback) const;
  bool get_bool_or(const std::string& section, const std::string& key, bool fallback) const;
  std::uint64_t get_seed(const std::string& section) const;  // required, no default

  // dotted_key = "section.key" (section itself may contain dots; the last
  // component is the key). Overrides win over file values.
  void set(const std::string& dotted_key, const std::string& value);

  // Rejects unknown sections/keys; called by the pipelines before running.
  void validate_keys() const;

  std::string serialize() const;

 private:
  // section -> ordered key/value list
  std::map<std::string, std::vector<std::pair<std::string, std::string>>> sections_;
  std::vector<std::string> section_order_;

  const std::string* find(const std::string& section, const std::string& key) const;
};

// Test-function specs: semicolon-separated entries of the forms
//   gauss:<center>:<sigma>    exp(-(x-c)^2 / (2 s^2)), analytic derivative
//   cos:<q>                   cos(q pi x / L) on the grid
//   bump:<center>:<radius>    C-infinity bump, zero outside the radius
std::vector<TestFunction> parse_test_functions(const std::string& spec, double half_width);

}  // namespace lobflux
