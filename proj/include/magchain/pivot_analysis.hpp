#pragma once

// Advancement traces, pivot-position metrics, parameter sweeps and efficiencies.

#include "magchain/csv.hpp"
#include "magchain/equilibrium.hpp"
#include "magchain/errors.hpp"
#include "magchain/kinematics.hpp"
#include "magchain/units.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace magchain {

// The magnet riding the designed pivot spring in state t. Kept in one place so
// the convention can be changed without touching the metrics.
inline int pivot_magnet_index(int t) { return t; }

struct AdvancementTrace {
  double gamma = 0.0;
  Vec3 lumen = Vec3::Zero();
  std::vector<ChainConfiguration> states;  // t = 2..N
  std::vector<Vec3> pivots;                // pivot magnet position per state

  const ChainConfiguration& state(int t) const { return states.at(static_cast<std::size_t>(t - 2)); }
};

inline AdvancementTrace advancement_trace(double gamma, const CatheterSpec& spec, const EnvironmentSpec& env,
                                          const SolveOptions& opts = {}) {
  const int N = spec.segments();
  if (N < 2) throw DomainError("advancement needs at least two segments");
  detail::check_stiffnesses(spec, N);

  AdvancementTrace trace;
  trace.gamma = gamma;
  const ChainConfiguration* previous = nullptr;
  for (int t = 2; t <= N; ++t) {
    const auto guess = initial_values(gamma, t, previous, env.steering_margin, opts.seed_angle);
    try {
      trace.states.push_back(solve_shape_aligned(gamma, t, spec, env, trace.lumen, guess, opts));
    } catch (const SolverFailure& e) {
      throw SolverFailure("advancement state t=" + std::to_string(t) + ": " + e.what(), e.best_iterate(),
                          e.residual_norm());
    } catch (const Error& e) {
      throw SolverFailure("advancement state t=" + std::to_string(t) + ": " + e.what(), Eigen::VectorXd{},
                          std::numeric_limits<double>::infinity());
    }
    const auto& s = trace.states.back();
    if (t == 2) trace.lumen = lumen_center(s.angles[0], s.angles[1], env.lumen_distance, spec);
    trace.pivots.push_back(s.position(pivot_magnet_index(t)));
    previous = &trace.states.back();
  }
  return trace;
}

struct PivotMetrics {
  double sigma = 0.0;     // [m]
  double dmax = 0.0;      // [m]
  double er_sigma = 0.0;  // sigma / reference length
  double er_dmax = 0.0;
};

inline PivotMetrics pivot_metrics(std::span<const Vec3> points, double reference_length) {
  PivotMetrics m;
  if (points.empty()) return m;
  Vec3 mean = Vec3::Zero();
  for (const auto& p : points) mean += p;
  mean /= static_cast<double>(points.size());
  double sum = 0.0;
  for (const auto& p : points) sum += (p - mean).squaredNorm();
  m.sigma = std::sqrt(sum / static_cast<double>(points.size()));
  for (std::size_t i = 0; i < points.size(); ++i)
    for (std::size_t j = i + 1; j < points.size(); ++j) m.dmax = std::max(m.dmax, (points[i] - points[j]).norm());
  m.er_sigma = m.sigma / reference_length;
  m.er_dmax = m.dmax / reference_length;
  return m;
}

inline PivotMetrics pivot_metrics(const AdvancementTrace& trace, const CatheterSpec& spec) {
  return pivot_metrics(trace.pivots, spec.total_length_including_base_magnet());
}

// Mean over states of the RMSE between corresponding magnet positions.
inline double shape_error(const AdvancementTrace& trace, const AdvancementTrace& reference) {
  if (trace.states.size() != reference.states.size() || trace.states.empty())
    throw DomainError("shape error needs traces with the same number of states");
  double total = 0.0;
  for (std::size_t s = 0; s < trace.states.size(); ++s) {
    const auto& a = trace.states[s];
    const auto& b = reference.states[s];
    double sum = 0.0;
    for (int n = 1; n <= a.t + 1; ++n) sum += (a.position(n) - b.position(n)).squaredNorm();
    total += std::sqrt(sum / (a.t + 1));
  }
  return total / static_cast<double>(trace.states.size());
}

inline constexpr double kStraightThreshold = 1e-9;  // [rad]

inline double bending_efficiency(const ChainConfiguration& c) {
  if (c.t < 2) throw DomainError("bending efficiency needs t >= 2");
  const double total = c.angles.sum();
  if (total < kStraightThreshold) return 1.0;
  return (c.angles[c.t - 2] + c.angles[c.t - 1]) / total;
}

inline Vec3 advancing_direction(double gamma) { return {0.0, -std::sin(gamma), std::cos(gamma)}; }

// Tip advance per cycle t -> t+1, projected on the advancing direction and
// normalized by the pushed length l_m + l_s.
inline std::vector<double> propulsion_ratios(const AdvancementTrace& trace, const CatheterSpec& spec) {
  const Vec3 v = advancing_direction(trace.gamma);
  std::vector<double> out;
  for (std::size_t s = 0; s + 1 < trace.states.size(); ++s)
    out.push_back((trace.states[s + 1].position(1) - trace.states[s].position(1)).dot(v) / spec.segment_pitch());
  return out;
}

inline double propulsion_efficiency(const AdvancementTrace& trace, const CatheterSpec& spec) {
  const auto r = propulsion_ratios(trace, spec);
  if (r.empty()) throw DomainError("propulsion efficiency needs at least two states");
  double sum = 0.0;
  for (double x : r) sum += x;
  return sum / static_cast<double>(r.size());
}

struct EfficiencySummary {
  double bend_mean = 0.0;
  double bend_std = 0.0;  // population, over the states
  double prop_mean = 0.0;
};

inline EfficiencySummary efficiency_summary(const AdvancementTrace& trace, const CatheterSpec& spec) {
  EfficiencySummary e;
  std::vector<double> b;
  for (const auto& s : trace.states) b.push_back(bending_efficiency(s));
  for (double x : b) e.bend_mean += x;
  e.bend_mean /= static_cast<double>(b.size());
  for (double x : b) e.bend_std += (x - e.bend_mean) * (x - e.bend_mean);
  e.bend_std = std::sqrt(e.bend_std / static_cast<double>(b.size()));
  e.prop_mean = propulsion_efficiency(trace, spec);
  return e;
}

// [k1, k2, 2 k6, 2 k6, 4 k6, 4 k6]
inline std::vector<double> nonoptimized_profile(std::span<const double> design) {
  if (design.size() < 6)
    throw DomainError("non-optimized profile needs 6 designed stiffnesses, got " + std::to_string(design.size()));
  const double k6 = design[5];
  return {design[0], design[1], 2.0 * k6, 2.0 * k6, 4.0 * k6, 4.0 * k6};
}

// --- sweeps -------------------------------------------------------------------

struct SweepGrid {
  std::vector<double> gammas;           // [rad]
  std::vector<double> fields;           // [T]
  std::vector<double> lumen_distances;  // [m]

  static std::vector<double> default_gammas() { return range_deg(0.0, 180.0, 10.0); }
  static std::vector<double> default_fields() { return range(units::from_mT(35.0), units::from_mT(45.0), units::from_mT(1.0)); }
  static std::vector<double> default_lumen_distances() { return range(units::from_mm(40.0), units::from_mm(140.0), units::from_mm(10.0)); }

  static std::vector<double> range(double lo, double hi, double step) {
    if (!(step > 0.0) || hi < lo) throw DomainError("grid needs step > 0 and hi >= lo");
    std::vector<double> out;
    const int count = static_cast<int>(std::floor((hi - lo) / step + 1e-9));
    for (int i = 0; i <= count; ++i) out.push_back(lo + i * step);
    return out;
  }
  static std::vector<double> range_deg(double lo, double hi, double step) {
    auto out = range(lo, hi, step);
    for (auto& x : out) x = units::from_deg(x);
    return out;
  }
};

struct SweepRecord {
  double gamma = 0.0;           // [rad]
  double field = 0.0;           // [T]
  double lumen_distance = 0.0;  // [m]
  bool ok = false;
  std::string error;
  PivotMetrics pivot;
  double shape_error = std::numeric_limits<double>::quiet_NaN();  // [m]
  EfficiencySummary efficiency;
};

namespace detail {

// Runs f(i) for i in [0, count) on up to `threads` workers.
inline void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& f) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, count));
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  for (unsigned w = 0; w < threads; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) f(i);
    });
}

}  // namespace detail

// One record per (field, lumen distance, gamma), in that nesting order. Shape
// errors are taken against the trace at the environment's own field and lumen
// distance for the same gamma. Failed points are recorded, not thrown.
inline std::vector<SweepRecord> sweep(const SweepGrid& grid, const CatheterSpec& spec, const EnvironmentSpec& env,
                                      const SolveOptions& opts = {}, unsigned threads = 0) {
  if (grid.gammas.empty() || grid.fields.empty() || grid.lumen_distances.empty())
    throw DomainError("sweep grids must be non-empty");
  detail::check_stiffnesses(spec, spec.segments());

  std::vector<std::optional<AdvancementTrace>> reference(grid.gammas.size());
  std::vector<std::string> reference_error(grid.gammas.size());
  detail::parallel_for(grid.gammas.size(), threads, [&](std::size_t g) {
    try {
      reference[g] = advancement_trace(grid.gammas[g], spec, env, opts);
    } catch (const std::exception& e) {
      reference_error[g] = e.what();
    }
  });

  std::vector<SweepRecord> out;
  for (double B : grid.fields)
    for (double dp : grid.lumen_distances)
      for (double gamma : grid.gammas) {
        SweepRecord r;
        r.gamma = gamma;
        r.field = B;
        r.lumen_distance = dp;
        out.push_back(std::move(r));
      }

  detail::parallel_for(out.size(), threads, [&](std::size_t i) {
    auto& r = out[i];
    const std::size_t g = i % grid.gammas.size();
    try {
      EnvironmentSpec e = env;
      e.field = r.field;
      e.lumen_distance = r.lumen_distance;
      const auto trace = advancement_trace(r.gamma, spec, e, opts);
      r.pivot = pivot_metrics(trace, spec);
      r.efficiency = efficiency_summary(trace, spec);
      if (!reference[g]) throw SolverFailure("standard-shape trace failed: " + reference_error[g], {}, 0.0);
      r.shape_error = shape_error(trace, *reference[g]);
      r.ok = true;
    } catch (const std::exception& e) {
      r.ok = false;
      r.error = e.what();
    }
  });
  return out;
}

inline double success_fraction(const std::vector<SweepRecord>& records) {
  if (records.empty()) return 0.0;
  const auto ok = std::count_if(records.begin(), records.end(), [](const SweepRecord& r) { return r.ok; });
  return static_cast<double>(ok) / static_cast<double>(records.size());
}

// --- CSV ------------------------------------------------------------------------
// Failed cells keep their grid coordinates, leave the values empty and carry
// status "failed".

namespace detail {

inline std::string cell(const SweepRecord& r, const char* spec, double v) { return r.ok ? csv::fmt(spec, v) : std::string{}; }

}  // namespace detail

inline std::string pivot_vs_gamma_csv(const std::vector<SweepRecord>& records) {
  std::ostringstream os;
  os << "# magchain-csv v1 pivot_vs_gamma\n";
  os << "gamma_deg,sigma_mm,dmax_mm,er_sigma_pct,er_dmax_pct,status\n";
  for (const auto& r : records)
    os << csv::fmt("%.1f", units::to_deg(r.gamma)) << ',' << detail::cell(r, "%.6f", units::to_mm(r.pivot.sigma)) << ','
       << detail::cell(r, "%.6f", units::to_mm(r.pivot.dmax)) << ','
       << detail::cell(r, "%.6f", 100.0 * r.pivot.er_sigma) << ','
       << detail::cell(r, "%.6f", 100.0 * r.pivot.er_dmax) << ',' << (r.ok ? "ok" : "failed") << '\n';
  return os.str();
}

inline std::string sweep_csv(const std::vector<SweepRecord>& records, const std::string& kind) {
  std::ostringstream os;
  os << "# magchain-csv v1 " << kind << '\n';
  os << "gamma_deg,B_mT,dp_mm,sigma_mm,dmax_mm,er_sigma_pct,er_dmax_pct,shape_err_mm,bend_eff_mean,prop_eff_mean,status\n";
  for (const auto& r : records)
    os << csv::fmt("%.1f", units::to_deg(r.gamma)) << ',' << csv::fmt("%.3f", units::to_mT(r.field)) << ','
       << csv::fmt("%.3f", units::to_mm(r.lumen_distance)) << ','
       << detail::cell(r, "%.6f", units::to_mm(r.pivot.sigma)) << ','
       << detail::cell(r, "%.6f", units::to_mm(r.pivot.dmax)) << ','
       << detail::cell(r, "%.6f", 100.0 * r.pivot.er_sigma) << ','
       << detail::cell(r, "%.6f", 100.0 * r.pivot.er_dmax) << ','
       << detail::cell(r, "%.6f", units::to_mm(r.shape_error)) << ','
       << detail::cell(r, "%.6f", r.efficiency.bend_mean) << ','
       << detail::cell(r, "%.6f", r.efficiency.prop_mean) << ',' << (r.ok ? "ok" : "failed") << '\n';
  return os.str();
}

struct ProfileRecords {
  std::string profile;  // "optimized" or "nonoptimized"
  std::vector<SweepRecord> records;
};

inline std::string efficiency_csv(const std::vector<ProfileRecords>& profiles) {
  std::ostringstream os;
  os << "# magchain-csv v1 efficiency\n";
  os << "gamma_deg,bend_eff_mean,bend_eff_std,prop_eff_mean,profile,status\n";
  for (const auto& p : profiles)
    for (const auto& r : p.records)
      os << csv::fmt("%.1f", units::to_deg(r.gamma)) << ',' << detail::cell(r, "%.6f", r.efficiency.bend_mean) << ','
         << detail::cell(r, "%.6f", r.efficiency.bend_std) << ',' << detail::cell(r, "%.6f", r.efficiency.prop_mean)
         << ',' << p.profile << ',' << (r.ok ? "ok" : "failed") << '\n';
  return os.str();
}

}  // namespace magchain
