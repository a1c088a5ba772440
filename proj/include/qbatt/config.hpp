#pragma once

// Flat `key = value` run configuration. `#` starts a comment, blank lines
// are skipped, unknown keys are an error. Command-line overrides reuse the
// same key set and are applied after the file.

#include <cstdint>
#include <istream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>

#include "qbatt/model.hpp"

namespace qbatt {

struct RunConfig {
  std::int64_t n_b = 0;  // required
  std::int64_t n_c = 0;  // required
  double v_b = 1.0;
  double v_c = 1.0;
  double j_b = 1.0;
  double j_c = 1.0;
  double j_bc = 1.0;
  double t_max = 10.0;
  std::int64_t n_samples = 1001;
  std::uint64_t seed = 1;
  double delta_j = 0.0;
  std::int64_t realizations = 11;

  SystemSpec spec() const {
    SystemSpec s{n_b, n_c, v_b, v_c, j_b, j_c, j_bc};
    s.validate();
    return s;
  }

  void set(std::string_view key, std::string_view value) {
    const std::string v(value);
    try {
      if (key == "n_b")
        n_b = std::stoll(v);
      else if (key == "n_c")
        n_c = std::stoll(v);
      else if (key == "v_b")
        v_b = std::stod(v);
      else if (key == "v_c")
        v_c = std::stod(v);
      else if (key == "j_b")
        j_b = std::stod(v);
      else if (key == "j_c")
        j_c = std::stod(v);
      else if (key == "j_bc")
        j_bc = std::stod(v);
      else if (key == "t_max")
        t_max = std::stod(v);
      else if (key == "n_samples")
        n_samples = std::stoll(v);
      else if (key == "seed")
        seed = std::stoull(v);
      else if (key == "delta_j")
        delta_j = std::stod(v);
      else if (key == "realizations")
        realizations = std::stoll(v);
      else
        throw std::invalid_argument("config: unknown key '" + std::string(key) + "'");
    } catch (const std::invalid_argument&) {
      throw;
    } catch (const std::exception&) {
      throw std::invalid_argument("config: bad value for '" + std::string(key) + "': " + v);
    }
  }
};

namespace detail {
inline std::string_view trim(std::string_view s) {
  const auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r'; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}
} // namespace detail

inline RunConfig parse_config(std::istream& in) {
  RunConfig cfg;
  bool has_nb = false, has_nc = false;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view sv(line);
    if (const auto hash = sv.find('#'); hash != std::string_view::npos)
      sv = sv.substr(0, hash);
    sv = detail::trim(sv);
    if (sv.empty()) continue;
    const auto eq = sv.find('=');
    if (eq == std::string_view::npos)
      throw std::invalid_argument("config: line " + std::to_string(lineno) +
                                  " is not 'key = value'");
    const std::string_view key = detail::trim(sv.substr(0, eq));
    const std::string_view value = detail::trim(sv.substr(eq + 1));
    if (key.empty() || value.empty())
      throw std::invalid_argument("config: empty key or value on line " +
                                  std::to_string(lineno));
    cfg.set(key, value);
    if (key == "n_b") has_nb = true;
    if (key == "n_c") has_nc = true;
  }
  if (!has_nb || !has_nc)
    throw std::invalid_argument("config: n_b and n_c are required");
  return cfg;
}

inline RunConfig parse_config_string(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

} // namespace qbatt
