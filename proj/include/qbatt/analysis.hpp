#pragma once

// Maxima extraction with local refinement, parameter sweeps, log-log
// power-law fits, and seeded noise ensembles with error bars.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "qbatt/analytic.hpp"
#include "qbatt/collective.hpp"
#include "qbatt/model.hpp"
#include "qbatt/random.hpp"
#include "qbatt/result.hpp"
#include "qbatt/sector.hpp"

namespace qbatt {

// ---------------------------------------------------------------------------
// Maxima over a sampled time series.

/// Re-evaluates the underlying dynamics at arbitrary (ascending) times.
using Evaluator = std::function<DynamicsResult(const std::vector<double>&)>;

namespace detail {

/// Earliest index of the maximum, with ties resolved at relative tolerance.
inline std::size_t earliest_argmax(const std::vector<double>& y, double rel_tol = 1e-9) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < y.size(); ++i)
    if (y[i] > y[best] + rel_tol * std::abs(y[best])) best = i;
  return best;
}

/// Vertex of the parabola through three points; falls back to the middle.
inline double parabola_vertex(double x0, double y0, double x1, double y1, double x2,
                              double y2) {
  const double d0 = (x1 - x0) * (y1 - y2);
  const double d2 = (x1 - x2) * (y1 - y0);
  const double denom = 2.0 * (d0 - d2);
  if (denom == 0.0) return x1;
  const double v = x1 - ((x1 - x0) * d0 - (x1 - x2) * d2) / denom;
  return std::clamp(v, std::min(x0, x2), std::max(x0, x2));
}

struct SeriesView {
  const std::vector<double>* t;
  const std::vector<double>* y;
};

inline MaxRecord refine_maximum(const SeriesView& series, MaxRecord::Kind kind,
                                const Evaluator& eval,
                                const std::function<double(const DynamicsResult&, std::size_t)>&
                                    pick) {
  const std::vector<double>& ts = *series.t;
  const std::vector<double>& ys = *series.y;
  if (ts.size() < 3) throw std::invalid_argument("find_maxima: need at least 3 samples");
  const std::size_t i = earliest_argmax(ys);
  MaxRecord rec{ys[i], ts[i], kind, i + 1 == ts.size()};
  if (rec.window_limited || !eval) return rec;

  // Re-evaluate a 10x denser window around the coarse maximum.
  const std::size_t lo = i > 0 ? i - 1 : 0;
  const std::size_t hi = std::min(i + 1, ts.size() - 1);
  std::vector<double> dense;
  const int refine_points = 21;
  for (int k = 0; k < refine_points; ++k) {
    const double f = static_cast<double>(k) / (refine_points - 1);
    const double tk = ts[lo] + f * (ts[hi] - ts[lo]);
    if (dense.empty() || tk > dense.back()) dense.push_back(tk);
  }
  if (dense.size() >= 2) {
    const DynamicsResult win = eval(dense);
    std::vector<double> wy(win.size());
    for (std::size_t k = 0; k < win.size(); ++k) wy[k] = pick(win, k);
    std::size_t j = earliest_argmax(wy);
    double best_t = win.t[j], best_v = wy[j];
    if (j > 0 && j + 1 < wy.size()) {
      const double tv = parabola_vertex(win.t[j - 1], wy[j - 1], win.t[j], wy[j],
                                        win.t[j + 1], wy[j + 1]);
      if (tv > 0.0 && tv != win.t[j]) {
        const DynamicsResult at = eval({tv});
        const double vv = pick(at, 0);
        if (vv > best_v) {
          best_v = vv;
          best_t = tv;
        }
      }
    }
    if (best_v > rec.value) {
      rec.value = best_v;
      rec.time = best_t;
    } else if (best_v >= rec.value - 1e-9 * std::abs(rec.value) && best_t < rec.time) {
      rec.time = best_t;  // earliest maximizer on ties
    }
  }
  return rec;
}

} // namespace detail

/// Coarse argmax over the sampled series, refined on a denser re-evaluated
/// window when an evaluator is supplied. A maximum on the final sample is
/// flagged window-limited and left unrefined.
inline std::pair<MaxRecord, MaxRecord> find_maxima(const DynamicsResult& result,
                                                   const Evaluator& eval = {}) {
  detail::SeriesView e{&result.t, &result.e_b};
  detail::SeriesView p{&result.t, &result.p_b};
  const auto pick_e = [](const DynamicsResult& r, std::size_t k) { return r.e_b[k]; };
  const auto pick_p = [](const DynamicsResult& r, std::size_t k) { return r.p_b[k]; };
  MaxRecord em = detail::refine_maximum(e, MaxRecord::Kind::energy, eval, pick_e);
  MaxRecord pm = detail::refine_maximum(p, MaxRecord::Kind::power, eval, pick_p);
  return {em, pm};
}

// ---------------------------------------------------------------------------
// Time-window policy for maxima runs.

struct WindowPolicy {
  enum class Kind {
    hp_guided,   // 10 t_E of the quadratic model when oscillatory, else 50 / max(g, |dV|)
    saturation,  // factor * sqrt(K/2) / g  (resonant transfer time scale)
    fixed,
  };
  Kind kind = Kind::hp_guided;
  double hp_factor = 10.0;
  double generic_scale = 50.0;
  double saturation_factor = 6.0;
  double fixed_t = 0.0;
  int max_doublings = 3;  // window may stretch up to 8x when limited

  double initial_window(const SystemSpec& spec) const {
    switch (kind) {
      case Kind::fixed:
        return fixed_t;
      case Kind::saturation: {
        const double g = std::max(std::abs(spec.g()), 1e-6);
        return saturation_factor * std::sqrt(0.5 * static_cast<double>(spec.k_max())) / g;
      }
      case Kind::hp_guided:
      default: {
        const HpParams hp = HpParams::from_spec(spec);
        if (hp.regime() == HpRegime::oscillatory)
          return hp_factor * M_PI / std::sqrt(hp.discriminant());
        return generic_scale /
               std::max({std::abs(spec.g()), std::abs(spec.delta_v()), 1e-6});
      }
    }
  }
};

// ---------------------------------------------------------------------------
// Log-log power-law fit.

struct FitRange {
  std::size_t lo = 0;  // inclusive
  std::size_t hi = 0;  // exclusive; 0 means "all points"
};

struct FitResult {
  double alpha = 0.0;
  double intercept = 0.0;
  double alpha_stderr = 0.0;
  double r_squared = 0.0;
  FitRange range;
};

inline FitResult fit_power_law(const std::vector<double>& x, const std::vector<double>& y,
                               FitRange range = {}) {
  if (x.size() != y.size()) throw std::invalid_argument("fit_power_law: size mismatch");
  if (range.hi == 0) range.hi = x.size();
  if (range.hi > x.size() || range.lo >= range.hi)
    throw std::invalid_argument("fit_power_law: bad range");
  const std::size_t n = range.hi - range.lo;
  if (n < 3) throw std::invalid_argument("fit_power_law: need at least 3 points");

  double sx = 0.0, sy = 0.0;
  for (std::size_t i = range.lo; i < range.hi; ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0))
      throw std::invalid_argument("fit_power_law: inputs must be positive");
    sx += std::log(x[i]);
    sy += std::log(y[i]);
  }
  const double mx = sx / static_cast<double>(n);
  const double my = sy / static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = range.lo; i < range.hi; ++i) {
    const double dx = std::log(x[i]) - mx;
    const double dy = std::log(y[i]) - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (sxx == 0.0) throw std::invalid_argument("fit_power_law: degenerate x range");

  FitResult fit;
  fit.range = range;
  fit.alpha = sxy / sxx;
  fit.intercept = my - fit.alpha * mx;
  double rss = 0.0;
  for (std::size_t i = range.lo; i < range.hi; ++i) {
    const double r = (std::log(y[i]) - my) - fit.alpha * (std::log(x[i]) - mx);
    rss += r * r;
  }
  fit.alpha_stderr = n > 2 ? std::sqrt(rss / static_cast<double>(n - 2) / sxx) : 0.0;
  fit.r_squared = syy > 0.0 ? std::clamp(1.0 - rss / syy, 0.0, 1.0) : 1.0;
  return fit;
}

/// Fixed-battery sweeps show two power laws in the charger size: one well
/// below the battery size and one approaching it. Default cut fractions are
/// 0.2 and 0.8 of N_B.
inline std::pair<FitResult, FitResult> fit_two_segments(const std::vector<double>& x,
                                                        const std::vector<double>& y,
                                                        double n_b, double f1 = 0.2,
                                                        double f2 = 0.8) {
  FitRange r1{0, 0}, r2{0, 0};
  std::size_t i = 0;
  while (i < x.size() && x[i] <= f1 * n_b) ++i;
  r1 = {0, i};
  std::size_t lo = 0;
  while (lo < x.size() && x[lo] < f2 * n_b) ++lo;
  std::size_t hi = lo;
  while (hi < x.size() && x[hi] <= n_b) ++hi;
  r2 = {lo, hi};
  return {fit_power_law(x, y, r1), fit_power_law(x, y, r2)};
}

// ---------------------------------------------------------------------------
// Parameter sweeps over the collective engine.

enum class SweepAxis { charger_size, total_size, jc_dv_grid, noise_amplitude };

struct SweepPlan {
  SystemSpec base;
  SweepAxis axis = SweepAxis::total_size;
  std::vector<double> points;                        // sizes or noise amplitudes
  std::vector<std::pair<double, double>> grid;       // (J_C, dV) pairs for jc_dv_grid
  WindowPolicy window;
  std::int64_t n_samples = 1500;
  KrylovOptions krylov;
  bool with_entropy_at_maxima = true;
};

struct SweepRow {
  double point = 0.0;
  MaxRecord e_max;
  MaxRecord p_max;
  double eta_at_t_e = std::nan("");
  double eta_at_t_p = std::nan("");
  double svn_at_t_e = std::nan("");
  double svn_at_t_p = std::nan("");
  std::string error;  // non-empty when the point failed
};

struct SweepTable {
  std::vector<SweepRow> rows;

  void write_csv(std::ostream& os) const {
    os << "point,E_max,P_max,t_E,t_P,eta_at_tE,eta_at_tP,SvN_at_tE,SvN_at_tP\n";
    for (const SweepRow& r : rows) {
      os << format_double(r.point) << ',' << format_double(r.e_max.value) << ','
         << format_double(r.p_max.value) << ',' << format_double(r.e_max.time) << ','
         << format_double(r.p_max.time) << ',' << format_double(r.eta_at_t_e) << ','
         << format_double(r.eta_at_t_p) << ',' << format_double(r.svn_at_t_e) << ','
         << format_double(r.svn_at_t_p) << "\n";
    }
  }
};

namespace detail {

inline SystemSpec spec_at_point(const SweepPlan& plan, std::size_t idx) {
  SystemSpec s = plan.base;
  switch (plan.axis) {
    case SweepAxis::charger_size:
      s.n_c = static_cast<std::int64_t>(std::llround(plan.points[idx]));
      break;
    case SweepAxis::total_size:
      s.n_b = s.n_c = static_cast<std::int64_t>(std::llround(plan.points[idx]));
      break;
    case SweepAxis::jc_dv_grid:
      s.j_c = plan.grid[idx].first;
      s.v_c = s.v_b - plan.grid[idx].second;
      break;
    case SweepAxis::noise_amplitude:
      break;  // handled by the noise ensemble driver
  }
  s.validate();
  return s;
}

/// Maxima of one collective run under the plan's window policy, with
/// auto-extension while a maximum sits on the window edge.
struct PointMaxima {
  MaxRecord e_max, p_max;
  double eta_t_e, eta_t_p, svn_t_e, svn_t_p;
};

inline PointMaxima collective_point_maxima(const SystemSpec& spec, const SweepPlan& plan) {
  PropagateOptions popts;
  popts.method = Method::krylov;  // short windows; avoids cubic eigensolves
  popts.krylov = plan.krylov;
  popts.with_entropy = false;

  double window = plan.window.initial_window(spec);
  MaxRecord em, pm;
  for (int attempt = 0;; ++attempt) {
    TimeGrid grid{window, plan.n_samples, GridSpacing::uniform};
    const DynamicsResult res = run_dynamics(spec, grid, popts);
    Evaluator eval = [&](const std::vector<double>& ts) {
      return run_dynamics(spec, std::span<const double>(ts.data(), ts.size()), popts);
    };
    std::tie(em, pm) = find_maxima(res, eval);
    if (!em.window_limited && !pm.window_limited) break;
    if (attempt >= plan.window.max_doublings)
      throw std::runtime_error("sweep point window-limited after extension cap");
    window *= 2.0;
  }

  PropagateOptions eopts = popts;
  eopts.with_entropy = plan.with_entropy_at_maxima;
  std::vector<double> at{std::min(em.time, pm.time), std::max(em.time, pm.time)};
  if (at[1] <= at[0]) at.pop_back();
  const DynamicsResult obs = run_dynamics(spec, std::span<const double>(at.data(), at.size()),
                                          eopts);
  const std::size_t ie = em.time <= pm.time ? 0 : obs.size() - 1;
  const std::size_t ip = obs.size() - 1 - ie;
  return PointMaxima{em, pm, obs.eta_b[ie], obs.eta_b[ip], obs.s_vn[ie], obs.s_vn[ip]};
}

} // namespace detail

/// One row per sweep point; failures are recorded per row, not thrown.
inline SweepTable run_sweep(const SweepPlan& plan) {
  const std::size_t count =
      plan.axis == SweepAxis::jc_dv_grid ? plan.grid.size() : plan.points.size();
  if (count == 0) throw std::invalid_argument("run_sweep: empty point list");
  if (plan.axis == SweepAxis::noise_amplitude)
    throw std::invalid_argument("run_sweep: noise sweeps run through noise_ensemble");
  SweepTable table;
  table.rows.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    SweepRow& row = table.rows[i];
    row.point = plan.axis == SweepAxis::jc_dv_grid ? static_cast<double>(i) : plan.points[i];
    try {
      const SystemSpec spec = detail::spec_at_point(plan, i);
      const detail::PointMaxima pm = detail::collective_point_maxima(spec, plan);
      row.e_max = pm.e_max;
      row.p_max = pm.p_max;
      row.eta_at_t_e = pm.eta_t_e;
      row.eta_at_t_p = pm.eta_t_p;
      row.svn_at_t_e = pm.svn_t_e;
      row.svn_at_t_p = pm.svn_t_p;
    } catch (const std::exception& ex) {
      row.error = ex.what();
      row.e_max.value = row.p_max.value = std::nan("");
      row.e_max.time = row.p_max.time = std::nan("");
    }
  }
  return table;
}

// ---------------------------------------------------------------------------
// Noise ensembles over the full-sector engine.

struct EnsembleStat {
  double mean = 0.0;
  double sem = 0.0;
  std::int64_t n_realizations = 0;
};

struct NoiseEnsembleOptions {
  WindowPolicy window{WindowPolicy::Kind::saturation};
  std::int64_t n_samples = 400;
  KrylovOptions krylov;
  int jobs = 1;
  SectorBuildOptions build;
};

struct NoiseSizePoint {
  double delta_j = 0.0;
  std::int64_t size = 0;  // N_B = N_C
  EnsembleStat e_max;
  EnsembleStat p_max;
  EnsembleStat t_p;
  std::vector<double> p_max_by_realization;
  std::vector<double> e_max_by_realization;
  std::vector<std::string> errors;  // per failed realization
};

struct NoiseFit {
  double delta_j = 0.0;
  FitResult p_fit_on_means;
  FitResult e_fit_on_means;
  double alpha_mean = 0.0;  // per-realization power exponents
  double alpha_sem = 0.0;
  std::vector<double> alpha_by_realization;
};

struct NoiseEnsembleResult {
  std::vector<NoiseSizePoint> points;   // (delta_j, size) grid
  std::vector<NoiseFit> fits;           // one per delta_j
  FitResult uniform_p_fit;              // delta_j = 0 baseline across sizes
  FitResult uniform_e_fit;
  std::vector<double> uniform_p_max;    // per size
  std::vector<double> uniform_e_max;
};

namespace detail {

struct SectorMaxima {
  double e_max, p_max, t_e, t_p;
  bool window_limited;
};

inline SectorMaxima sector_point_maxima(const SystemSpec& spec, double delta_j,
                                        std::uint64_t seed,
                                        const NoiseEnsembleOptions& opts) {
  const CouplingTable table =
      delta_j == 0.0 ? CouplingTable::uniform(spec) : make_noisy_table(spec, delta_j, seed);
  const SectorSystem sys = build_sector(table, static_cast<int>(spec.n_c), opts.build);
  SectorRunOptions ropts;
  ropts.krylov = opts.krylov;
  ropts.with_entropy = false;

  double window = opts.window.initial_window(spec);
  for (int attempt = 0;; ++attempt) {
    TimeGrid grid{window, opts.n_samples, GridSpacing::uniform};
    const DynamicsResult res = run_sector_dynamics(sys, grid, ropts);
    Evaluator eval = [&](const std::vector<double>& ts) {
      return run_sector_dynamics(sys, std::span<const double>(ts.data(), ts.size()), ropts);
    };
    auto [em, pm] = find_maxima(res, eval);
    if (!em.window_limited && !pm.window_limited)
      return SectorMaxima{em.value, pm.value, em.time, pm.time, false};
    if (attempt >= opts.window.max_doublings)
      return SectorMaxima{em.value, pm.value, em.time, pm.time, true};
    window *= 2.0;
  }
}

inline EnsembleStat stat_of(const std::vector<double>& xs) {
  EnsembleStat st;
  st.n_realizations = static_cast<std::int64_t>(xs.size());
  if (xs.empty()) return st;
  double s = 0.0;
  for (double x : xs) s += x;
  st.mean = s / static_cast<double>(xs.size());
  if (xs.size() >= 2) {
    double v = 0.0;
    for (double x : xs) v += (x - st.mean) * (x - st.mean);
    v /= static_cast<double>(xs.size() - 1);
    st.sem = std::sqrt(v / static_cast<double>(xs.size()));
  }
  return st;
}

} // namespace detail

/// Independent noise realizations per (delta_j, size), with derived seeds
/// mix(master, realization, delta_j index). Results merge by index, so the
/// output is identical for any job count.
inline NoiseEnsembleResult noise_ensemble(const SystemSpec& base,
                                          const std::vector<std::int64_t>& sizes,
                                          const std::vector<double>& deltas,
                                          std::int64_t n_realizations, std::uint64_t seed,
                                          const NoiseEnsembleOptions& opts = {}) {
  if (n_realizations < 2)
    throw std::invalid_argument("noise_ensemble: need at least 2 realizations");
  if (sizes.empty() || deltas.empty())
    throw std::invalid_argument("noise_ensemble: empty size or amplitude list");

  NoiseEnsembleResult out;

  // Uniform baseline, one run per size.
  std::vector<double> size_x;
  for (std::int64_t s : sizes) {
    SystemSpec spec = base;
    spec.n_b = spec.n_c = s;
    spec.validate();
    const detail::SectorMaxima m = detail::sector_point_maxima(spec, 0.0, 0, opts);
    out.uniform_e_max.push_back(m.e_max);
    out.uniform_p_max.push_back(m.p_max);
    size_x.push_back(static_cast<double>(s));
  }
  out.uniform_p_fit = fit_power_law(size_x, out.uniform_p_max);
  out.uniform_e_fit = fit_power_law(size_x, out.uniform_e_max);

  for (std::size_t di = 0; di < deltas.size(); ++di) {
    const double dj = deltas[di];
    std::vector<NoiseSizePoint> points(sizes.size());

    for (std::size_t si = 0; si < sizes.size(); ++si) {
      NoiseSizePoint& pt = points[si];
      pt.delta_j = dj;
      pt.size = sizes[si];
      pt.e_max_by_realization.assign(static_cast<std::size_t>(n_realizations), std::nan(""));
      pt.p_max_by_realization.assign(static_cast<std::size_t>(n_realizations), std::nan(""));
      pt.errors.assign(static_cast<std::size_t>(n_realizations), "");
      std::vector<double> tps(static_cast<std::size_t>(n_realizations), std::nan(""));

      SystemSpec spec = base;
      spec.n_b = spec.n_c = sizes[si];
      spec.validate();

      auto run_one = [&](std::int64_t r) {
        try {
          const std::uint64_t rs =
              derive_seed(seed, static_cast<std::uint64_t>(r), static_cast<std::uint64_t>(di));
          const detail::SectorMaxima m = detail::sector_point_maxima(spec, dj, rs, opts);
          pt.e_max_by_realization[static_cast<std::size_t>(r)] = m.e_max;
          pt.p_max_by_realization[static_cast<std::size_t>(r)] = m.p_max;
          tps[static_cast<std::size_t>(r)] = m.t_p;
          if (m.window_limited)
            pt.errors[static_cast<std::size_t>(r)] = "window-limited after extension cap";
        } catch (const std::exception& ex) {
          pt.errors[static_cast<std::size_t>(r)] = ex.what();
        }
      };

      if (opts.jobs <= 1) {
        for (std::int64_t r = 0; r < n_realizations; ++r) run_one(r);
      } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < opts.jobs; ++w) {
          pool.emplace_back([&, w] {
            for (std::int64_t r = w; r < n_realizations; r += opts.jobs) run_one(r);
          });
        }
        for (std::thread& th : pool) th.join();
      }

      std::vector<double> ok_e, ok_p;
      for (std::int64_t r = 0; r < n_realizations; ++r) {
        if (pt.errors[static_cast<std::size_t>(r)].empty()) {
          ok_e.push_back(pt.e_max_by_realization[static_cast<std::size_t>(r)]);
          ok_p.push_back(pt.p_max_by_realization[static_cast<std::size_t>(r)]);
        }
      }
      std::vector<double> ok_tp;
      for (std::int64_t r = 0; r < n_realizations; ++r)
        if (pt.errors[static_cast<std::size_t>(r)].empty())
          ok_tp.push_back(tps[static_cast<std::size_t>(r)]);
      pt.e_max = detail::stat_of(ok_e);
      pt.p_max = detail::stat_of(ok_p);
      pt.t_p = detail::stat_of(ok_tp);
    }

    NoiseFit fit;
    fit.delta_j = dj;
    std::vector<double> p_means, e_means;
    for (const NoiseSizePoint& pt : points) {
      p_means.push_back(pt.p_max.mean);
      e_means.push_back(pt.e_max.mean);
    }
    fit.p_fit_on_means = fit_power_law(size_x, p_means);
    fit.e_fit_on_means = fit_power_law(size_x, e_means);

    // Per-realization exponents: realization r across all sizes.
    for (std::int64_t r = 0; r < n_realizations; ++r) {
      std::vector<double> px;
      std::vector<double> py;
      for (std::size_t si = 0; si < sizes.size(); ++si) {
        if (points[si].errors[static_cast<std::size_t>(r)].empty()) {
          px.push_back(static_cast<double>(sizes[si]));
          py.push_back(points[si].p_max_by_realization[static_cast<std::size_t>(r)]);
        }
      }
      if (px.size() >= 3)
        fit.alpha_by_realization.push_back(fit_power_law(px, py).alpha);
    }
    const EnsembleStat as = detail::stat_of(fit.alpha_by_realization);
    fit.alpha_mean = as.mean;
    fit.alpha_sem = as.sem;

    for (NoiseSizePoint& pt : points) out.points.push_back(std::move(pt));
    out.fits.push_back(std::move(fit));
  }
  return out;
}

} // namespace qbatt
