#include "lobflux/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace lobflux {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

// Known settings; anything else is a config error.
const std::set<std::pair<std::string, std::string>>& key_registry() {
  static const std::set<std::pair<std::string, std::string>> reg = {
      {"grid", "delta"},
      {"grid", "half_width"},
      {"grid", "M"},
      {"model", "mode"},
      {"model", "side"},
      {"model", "preset"},
      {"model", "p_a"},
      {"model", "p_b"},
      {"model", "f_scale"},
      {"model", "g_scale"},
      {"model", "p_base"},
      {"model", "p_slope_y"},
      {"model", "y_ref"},
      {"model", "h_kind"},
      {"model", "h_window"},
      {"model", "h_center"},
      {"model", "h_sigma"},
      {"model", "profile_lo"},
      {"model", "profile_hi"},
      {"model", "profile_shape"},
      {"model", "g_floor_abs"},
      {"model", "g_feas_margin"},
      {"coefficients.bid", "p_c"},
      {"coefficients.bid", "p_y"},
      {"coefficients.bid", "f0_c"},
      {"coefficients.bid", "f0_y"},
      {"coefficients.bid", "F_c"},
      {"coefficients.bid", "F_y"},
      {"coefficients.bid", "G_c"},
      {"coefficients.bid", "G_y"},
      {"coefficients.bid", "G_yy"},
      {"coefficients.ask", "p_c"},
      {"coefficients.ask", "p_y"},
      {"coefficients.ask", "f0_c"},
      {"coefficients.ask", "f0_y"},
      {"coefficients.ask", "F_c"},
      {"coefficients.ask", "F_y"},
      {"coefficients.ask", "G_c"},
      {"coefficients.ask", "G_y"},
      {"coefficients.ask", "G_yy"},
      {"init", "b0"},
      {"init", "u0_shape"},
      {"init", "u0_lo"},
      {"init", "u0_hi"},
      {"init", "u0_height"},
      {"init", "u0_center"},
      {"init", "u0_sigma"},
      {"sim", "T"},
      {"sim", "n_paths"},
      {"sim", "seed"},
      {"sim", "record_stride"},
      {"sim", "n_threads"},
      {"first_order", "dt"},
      {"first_order", "fixed_point_iters"},
      {"first_order", "snapshot_stride"},
      {"second_order", "mode"},
      {"second_order", "K"},
      {"second_order", "dt"},
      {"second_order", "n_paths"},
      {"second_order", "seed"},
      {"second_order", "covariance_exponent"},
      {"second_order", "quad_steps"},
      {"second_order", "force_zero_q"},
      {"fluctuations", "test_fns"},
      {"fluctuations", "n_checkpoints"},
      {"fluctuations", "n_paths"},
      {"fluctuations", "seed"},
      {"fluctuations", "paths_dir"},
      {"fluctuations", "first_order_dir"},
      {"fluctuations", "remainder_allowance"},
      {"calibration", "input"},
      {"calibration", "n_levels"},
      {"calibration", "window_seconds"},
      {"calibration", "burn_in"},
      {"calibration", "tick"},
      {"calibration", "side"},
      {"validate", "b_lo"},
      {"validate", "b_hi"},
      {"validate", "y_lo"},
      {"validate", "y_hi"},
      {"validate", "n_b"},
      {"validate", "n_y"},
      {"convergence", "delta_ladder"},
      {"convergence", "n_paths"},
      {"convergence", "seed"},
      {"output", "density_snapshots"},
      {"output", "max_path_files"},
      {"output", "formats"},
      {"output", "book_csv"},
  };
  return reg;
}

}  // namespace

Config Config::parse(const std::string& text) {
  Config cfg;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string s = trim(line);
    if (s.empty() || s[0] == '#' || s[0] == ';') continue;
    if (s.front() == '[') {
      if (s.back() != ']') {
        throw Error(ErrorKind::validation,
                    "config: malformed section header at line " + std::to_string(line_no));
      }
      section = trim(s.substr(1, s.size() - 2));
      if (section.empty()) {
        throw Error(ErrorKind::validation, "config: empty section at line " + std::to_string(line_no));
      }
      if (!cfg.sections_.count(section)) cfg.section_order_.push_back(section);
      cfg.sections_[section];
      continue;
    }
    std::size_t eq = s.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorKind::validation,
                  "config: expected key = value at line " + std::to_string(line_no));
    }
    std::string key = trim(s.substr(0, eq));
    std::string value = trim(s.substr(eq + 1));
    if (key.empty()) {
      throw Error(ErrorKind::validation, "config: empty key at line " + std::to_string(line_no));
    }
    if (section.empty()) {
      throw Error(ErrorKind::validation,
                  "config: key before any section at line " + std::to_string(line_no));
    }
    auto& kvs = cfg.sections_[section];
    bool replaced = false;
    for (auto& kv : kvs) {
      if (kv.first == key) {
        kv.second = value;
        replaced = true;
        break;
      }
    }
    if (!replaced) kvs.emplace_back(key, value);
  }
  return cfg;
}

Config Config::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "config: cannot open '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return parse(os.str());
}

const std::string* Config::find(const std::string& section, const std::string& key) const {
  auto it = sections_.find(section);
  if (it == sections_.end()) return nullptr;
  for (const auto& kv : it->second) {
    if (kv.first == key) return &kv.second;
  }
  return nullptr;
}

bool Config::has(const std::string& section, const std::string& key) const {
  return find(section, key) != nullptr;
}

std::string Config::get_string(const std::string& section, const std::string& key) const {
  const std::string* v = find(section, key);
  if (!v) throw Error(ErrorKind::validation, "config: missing " + section + "." + key);
  return *v;
}

std::string Config::get_string_or(const std::string& section, const std::string& key,
                                  const std::string& fallback) const {
  const std::string* v = find(section, key);
  return v ? *v : fallback;
}

double Config::get_double(const std::string& section, const std::string& key) const {
  const std::string s = get_string(section, key);
  try {
    std::size_t pos;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (...) {
    throw Error(ErrorKind::validation, "config: " + section + "." + key + " is not a real: '" + s + "'");
  }
}

double Config::get_double_or(const std::string& section, const std::string& key,
                             double fallback) const {
  return has(section, key) ? get_double(section, key) : fallback;
}

long long Config::get_int(const std::string& section, const std::string& key) const {
  const std::string s = get_string(section, key);
  try {
    std::size_t pos;
    long long v = std::stoll(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (...) {
    throw Error(ErrorKind::validation,
                "config: " + section + "." + key + " is not an integer: '" + s + "'");
  }
}

long long Config::get_int_or(const std::string& section, const std::string& key,
                             long long fallback) const {
  return has(section, key) ? get_int(section, key) : fallback;
}

bool Config::get_bool_or(const std::string& section, const std::string& key, bool fallback) const {
  if (!has(section, key)) return fallback;
  std::string s = get_string(section, key);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw Error(ErrorKind::validation, "config: " + section + "." + key + " is not a boolean");
}

std::uint64_t Config::get_seed(const std::string& section) const {
  if (!has(section, "seed")) {
    throw Error(ErrorKind::validation,
                "config: " + section + ".seed is required (no wall-clock default)");
  }
  long long v = get_int(section, "seed");
  return static_cast<std::uint64_t>(v);
}

void Config::set(const std::string& dotted_key, const std::string& value) {
  std::size_t dot = dotted_key.rfind('.');
  if (dot == std::string::npos || dot == 0 || dot + 1 == dotted_key.size()) {
    throw Error(ErrorKind::validation, "config: override must be section.key=value");
  }
  std::string section = dotted_key.substr(0, dot);
  std::string key = dotted_key.substr(dot + 1);
  if (!sections_.count(section)) section_order_.push_back(section);
  auto& kvs = sections_[section];
  for (auto& kv : kvs) {
    if (kv.first == key) {
      kv.second = value;
      return;
    }
  }
  kvs.emplace_back(key, value);
}

void Config::validate_keys() const {
  const auto& reg = key_registry();
  for (const auto& [section, kvs] : sections_) {
    for (const auto& kv : kvs) {
      if (!reg.count({section, kv.first})) {
        throw Error(ErrorKind::validation,
                    "config: unknown key " + section + "." + kv.first);
      }
    }
  }
}

std::string Config::serialize() const {
  std::ostringstream os;
  for (const auto& section : section_order_) {
    auto it = sections_.find(section);
    if (it == sections_.end() || it->second.empty()) continue;
    os << "[" << section << "]\n";
    for (const auto& kv : it->second) os << kv.first << " = " << kv.second << "\n";
    os << "\n";
  }
  return os.str();
}

std::vector<TestFunction> parse_test_functions(const std::string& spec, double half_width) {
  std::vector<TestFunction> out;
  std::istringstream in(spec);
  std::string item;
  while (std::getline(in, item, ';')) {
    item = trim(item);
    if (item.empty()) continue;
    std::vector<std::string> parts;
    std::istringstream ip(item);
    std::string p;
    while (std::getline(ip, p, ':')) parts.push_back(trim(p));
    if (parts.empty()) continue;
    TestFunction fn;
    if (parts[0] == "gauss" && parts.size() == 3) {
      double c = std::stod(parts[1]), s = std::stod(parts[2]);
      if (!(s > 0.0)) throw Error(ErrorKind::validation, "test fn: gauss sigma must be > 0");
      fn.f = [c, s](double x) { return std::exp(-0.5 * (x - c) * (x - c) / (s * s)); };
      fn.deriv = [c, s](double x) {
        return -(x - c) / (s * s) * std::exp(-0.5 * (x - c) * (x - c) / (s * s));
      };
      fn.label = item;
    } else if (parts[0] == "cos" && parts.size() == 2) {
      int q = std::stoi(parts[1]);
      double w = q * kPi / half_width;
      fn.f = [w](double x) { return std::cos(w * x); };
      fn.deriv = [w](double x) { return -w * std::sin(w * x); };
      fn.label = item;
    } else if (parts[0] == "bump" && parts.size() == 3) {
      double c = std::stod(parts[1]), r = std::stod(parts[2]);
      if (!(r > 0.0)) throw Error(ErrorKind::validation, "test fn: bump radius must be > 0");
      fn.f = [c, r](double x) {
        double t = (x - c) / r;
        if (std::abs(t) >= 1.0) return 0.0;
        return std::exp(1.0 - 1.0 / (1.0 - t * t));
      };
      fn.label = item;
    } else {
      throw Error(ErrorKind::validation, "test fn: cannot parse '" + item + "'");
    }
    out.push_back(std::move(fn));
  }
  if (out.empty()) throw Error(ErrorKind::validation, "test fn: empty spec");
  return out;
}

}  // namespace lobflux
