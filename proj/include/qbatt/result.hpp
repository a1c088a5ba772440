#pragma once

// Sampled observable series of one dynamics run plus the conservation
// diagnostics accumulated while sampling. CSV bodies use shortest
// round-trip decimal formatting so reruns are byte-identical.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace qbatt {

inline std::string format_double(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

struct ConservationDiagnostics {
  double max_norm_error = 0.0;        // | ||c||^2 - 1 |
  double max_energy_drift = 0.0;      // | <H>(t) - <H>(0) |
  double max_excitation_error = 0.0;  // | E_B/V_B + E_C/V_C - N_C |
  double entropy_bound_excess = 0.0;  // max(S - S_bound, -S), clipped at 0
  double energy_reference = 0.0;      // <H>(0)
  bool excitation_checked = false;
  bool entropy_checked = false;

  /// Throws when a conserved quantity drifted beyond tolerance.
  void require(double norm_tol = 1e-10, double energy_rtol = 1e-9,
               double excitation_tol = 1e-9, double entropy_tol = 1e-9) const {
    if (max_norm_error > norm_tol)
      throw std::runtime_error("conservation: norm drift " + format_double(max_norm_error));
    const double e_scale = std::max(std::abs(energy_reference), 1.0);
    if (max_energy_drift > energy_rtol * e_scale)
      throw std::runtime_error("conservation: energy drift " + format_double(max_energy_drift));
    if (excitation_checked && max_excitation_error > excitation_tol)
      throw std::runtime_error("conservation: excitation drift " +
                               format_double(max_excitation_error));
    if (entropy_checked && entropy_bound_excess > entropy_tol)
      throw std::runtime_error("conservation: entropy bound violated by " +
                               format_double(entropy_bound_excess));
  }
};

struct DynamicsResult {
  std::vector<double> t;
  std::vector<double> e_b;
  std::vector<double> p_b;
  std::vector<double> eta_b;
  std::vector<double> s_vn;
  std::vector<double> s_vn_norm;
  std::vector<double> e_total;
  ConservationDiagnostics diagnostics;
  std::int64_t realization = -1;  // >= 0 tags one member of a noise ensemble

  std::size_t size() const { return t.size(); }

  void write_csv(std::ostream& os) const {
    os << "t,E_B,P_B,eta_B,S_vN,S_vN_norm,E_total";
    if (realization >= 0) os << ",realization";
    os << "\n";
    for (std::size_t i = 0; i < t.size(); ++i) {
      os << format_double(t[i]) << ',' << format_double(e_b[i]) << ','
         << format_double(p_b[i]) << ',' << format_double(eta_b[i]) << ','
         << format_double(s_vn[i]) << ',' << format_double(s_vn_norm[i]) << ','
         << format_double(e_total[i]);
      if (realization >= 0) os << ',' << realization;
      os << "\n";
    }
  }
};

} // namespace qbatt
