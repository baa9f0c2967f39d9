#pragma once

// Recursive bending-stiffness design that holds the steering pivot.
//
// Springs 1 and 2 follow directly from the 180 deg design pose
// (alpha_1 = alpha_2 = alpha_d, theta = 2 alpha_d + beta). For n >= 3 the chain
// has t = n free segments with the pivot spring frozen at alpha_d; the field
// direction and the n-1 alignment-part angles are chosen so that the chain is
// in equilibrium and z_1 points at the lumen center fixed by the n = 2 pose.
// The equilibrium equalities are eliminated by an inner Newton solve, leaving a
// bounded 1-D search over theta. k_b,n is the torque on the pivot spring
// divided by alpha_d.

#include "magchain/csv.hpp"
#include "magchain/equilibrium.hpp"
#include "magchain/kinematics.hpp"
#include "magchain/units.hpp"

#include <boost/math/tools/minima.hpp>
#include <boost/math/tools/toms748_solve.hpp>

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

namespace magchain {

struct DesignStep {
  int n = 0;
  double stiffness = 0.0;           // k_b,n [N*m/rad]
  double theta = 0.0;               // theta*_n [rad]
  Eigen::VectorXd angles;           // full t = n pose, pivot spring last
  double alignment_residual = 0.0;  // |angle(z_1, v_targ)| [rad]
  int evaluations = 0;              // inner equilibrium solves
};

struct DesignTable {
  std::vector<double> stiffness;  // k_b,1..N
  std::vector<DesignStep> steps;
  Vec3 lumen = Vec3::Zero();      // p_t [m]
  Specs parameters;               // snapshot the table was designed for
  std::vector<std::string> warnings;

  int size() const { return static_cast<int>(stiffness.size()); }
};

struct DesignOptions {
  SolveOptions solve;
  double scan_step = std::numbers::pi / 360.0;  // 0.5 deg theta march
  double alignment_warning = 1e-6;              // rad
};

namespace detail {

inline void check_design_pose(const CatheterSpec& spec) {
  if (std::abs(spec.design_angle() - std::numbers::pi / 2.0) > 1e-12)
    throw DomainError("stiffness design requires a 90 deg design angle");
}

inline double pivot_stiffness(int n, const ChainConfiguration& c, double theta, const CatheterSpec& spec,
                              const EnvironmentSpec& env, InteractionModel model) {
  return spring_torque_sum(n, c, field_vector(theta, env.field), spec, model).norm() / spec.design_angle();
}

}  // namespace detail

// theta*_2 = gamma_max + beta with gamma_max = 2 alpha_d.
inline double design_field_angle(const CatheterSpec& spec, const EnvironmentSpec& env) {
  return 2.0 * spec.design_angle() + env.steering_margin;
}

inline ChainConfiguration design_pose(const CatheterSpec& spec, const EnvironmentSpec& env) {
  detail::check_design_pose(spec);
  auto c = compose_world_poses(Eigen::Vector2d::Constant(spec.design_angle()), spec);
  c.theta = design_field_angle(spec, env);
  return c;
}

inline double design_k1(const CatheterSpec& spec, const EnvironmentSpec& env,
                        InteractionModel model = InteractionModel::nearest_neighbor) {
  const auto c = design_pose(spec, env);
  return detail::pivot_stiffness(1, c, c.theta, spec, env, model);
}

struct SecondSpringDesign {
  double stiffness = 0.0;
  Vec3 lumen = Vec3::Zero();
  double theta = 0.0;
  Eigen::VectorXd angles;
};

inline SecondSpringDesign design_k2(const CatheterSpec& spec, const EnvironmentSpec& env,
                                    InteractionModel model = InteractionModel::nearest_neighbor) {
  const auto c = design_pose(spec, env);
  SecondSpringDesign out;
  out.stiffness = detail::pivot_stiffness(2, c, c.theta, spec, env, model);
  out.lumen = lumen_center(c.angles[0], c.angles[1], env.lumen_distance, spec);
  out.theta = c.theta;
  out.angles = c.angles;
  return out;
}

namespace detail {

// Equilibrium of springs 1..n-1 with spring n frozen at alpha_d.
struct FrozenPivotSystem {
  const CatheterSpec& spec;
  const EnvironmentSpec& env;
  double theta;
  double floor;

  Eigen::VectorXd full(const Eigen::VectorXd& a) const {
    Eigen::VectorXd out(a.size() + 1);
    out.head(a.size()) = a;
    out[a.size()] = spec.design_angle();
    return out;
  }
  ResidualVector terms(const Eigen::VectorXd& a) const {
    return equilibrium_terms(compose_world_poses(full(a), spec), field_vector(theta, env.field), spec,
                             static_cast<int>(a.size()), floor);
  }
  Eigen::VectorXd raw(const Eigen::VectorXd& a) const { return terms(a).values; }
  Eigen::VectorXd scales(const Eigen::VectorXd& a) const { return terms(a).scales; }
};

class PivotAlignment {
public:
  PivotAlignment(int n, const CatheterSpec& spec, const EnvironmentSpec& env, const Vec3& lumen, double alpha_max,
                 const SolveOptions& opts)
      : n_(n), spec_(spec), env_(env), lumen_(lumen), alpha_max_(alpha_max), opts_(opts) {}

  struct Point {
    double theta;
    Eigen::VectorXd alpha;  // n-1 alignment-part angles
    double angle;           // signed alignment angle
  };

  // Solves the alignment-part equilibrium at theta starting from `warm`.
  Point evaluate(double theta, const Eigen::VectorXd& warm) {
    ++evaluations_;
    const FrozenPivotSystem sys{spec_, env_, theta, torque_floor(spec_, env_, opts_.relative_torque_floor)};
    const auto m = n_ - 1;
    const auto res = solve_newton(sys, warm, Eigen::VectorXd::Zero(m), Eigen::VectorXd::Constant(m, alpha_max_),
                                  opts_.newton());
    if (!res.converged)
      throw SolverFailure("alignment-part equilibrium failed at theta=" + std::to_string(units::to_deg(theta)) + " deg",
                          res.x, res.residual_norm);
    const auto c = compose_world_poses(sys.full(res.x), spec_);
    Point p{theta, res.x, signed_plane_angle(c.axis(1), target_direction(c.position(1), lumen_))};
    history_.push_back(p);
    return p;
  }

  // Warm start from the closest theta already evaluated.
  Eigen::VectorXd nearest_warm(double theta) const {
    const Point* best = &history_.front();
    for (const auto& p : history_)
      if (std::abs(p.theta - theta) < std::abs(best->theta - theta)) best = &p;
    return best->alpha;
  }

  int evaluations() const { return evaluations_; }

private:
  int n_;
  const CatheterSpec& spec_;
  const EnvironmentSpec& env_;
  Vec3 lumen_;
  double alpha_max_;
  SolveOptions opts_;
  std::vector<Point> history_;
  int evaluations_ = 0;
};

}  // namespace detail

// One recursion step for n >= 3. `spec` must carry k_b,1..n-1.
inline DesignStep design_kn(int n, const CatheterSpec& spec, const EnvironmentSpec& env, const Vec3& lumen,
                            const InitialGuess& warm, const DesignOptions& opts = {},
                            std::vector<std::string>* warnings = nullptr) {
  if (n < 3 || n > spec.segments()) throw DomainError("design_kn needs 3 <= n <= N");
  if (!spec.has_stiffnesses(n - 1)) throw DomainError("design_kn needs k_b,1..n-1");
  if (warm.angles.size() != n - 1) throw DomainError("warm start must hold n-1 angles");
  detail::check_design_pose(spec);

  const double delta = opts.solve.seed_angle;
  const double theta_max = warm.theta + delta;
  const double alpha_max = spec.design_angle() + delta;
  detail::PivotAlignment problem(n, spec, env, lumen, alpha_max, opts.solve);

  try {
    // March theta down from just inside the upper bound until the alignment
    // angle changes sign, continuing the alignment-part shape along the way.
    auto upper = problem.evaluate(warm.theta + delta / 2.0, warm.angles);
    detail::PivotAlignment::Point lower = upper;
    bool bracketed = (upper.angle == 0.0);
    double step = opts.scan_step;
    auto best = upper;
    while (!bracketed && lower.theta > 0.0) {
      const double next = std::max(lower.theta - step, 0.5 * delta);
      if (next >= lower.theta) break;
      detail::PivotAlignment::Point p;
      try {
        p = problem.evaluate(next, lower.alpha);
      } catch (const SolverFailure&) {
        step /= 2.0;
        if (step < 1e-8) throw;
        continue;
      }
      if (std::abs(p.angle) < std::abs(best.angle)) best = p;
      if ((p.angle > 0.0) != (lower.angle > 0.0) || p.angle == 0.0) {
        upper = lower;
        lower = p;
        bracketed = true;
      } else {
        upper = lower;
        lower = p;
      }
    }

    detail::PivotAlignment::Point solution = best;
    if (bracketed && solution.angle != 0.0) {
      auto f = [&](double theta) { return problem.evaluate(theta, problem.nearest_warm(theta)).angle; };
      std::uintmax_t iters = 200;
      const auto root = boost::math::tools::toms748_solve(f, lower.theta, upper.theta, lower.angle, upper.angle,
                                                          boost::math::tools::eps_tolerance<double>(52), iters);
      const double theta = 0.5 * (root.first + root.second);
      solution = problem.evaluate(theta, problem.nearest_warm(theta));
    } else if (!bracketed) {
      // No sign change on (0, theta_max): settle for the smallest misalignment.
      auto f = [&](double theta) { return std::abs(problem.evaluate(theta, problem.nearest_warm(theta)).angle); };
      const double lo = std::max(best.theta - opts.scan_step, 0.5 * delta);
      const double hi = std::min(best.theta + opts.scan_step, theta_max - 0.5 * delta);
      std::uintmax_t iters = 200;
      const auto r = boost::math::tools::brent_find_minima(f, lo, hi, 52, iters);
      solution = problem.evaluate(r.first, problem.nearest_warm(r.first));
    }

    DesignStep step_out;
    step_out.n = n;
    step_out.theta = solution.theta;
    step_out.angles.resize(n);
    step_out.angles.head(n - 1) = solution.alpha;
    step_out.angles[n - 1] = spec.design_angle();
    step_out.alignment_residual = std::abs(solution.angle);
    step_out.evaluations = problem.evaluations();
    const auto c = compose_world_poses(step_out.angles, spec);
    step_out.stiffness =
        detail::pivot_stiffness(n, c, solution.theta, spec, env, InteractionModel::nearest_neighbor);

    for (Eigen::Index l = 0; l < solution.alpha.size(); ++l)
      if (!(solution.alpha[l] < alpha_max) || solution.alpha[l] < 0.0)
        throw DesignFailure(n, "alignment-part angle outside (0, alpha_d + delta)");
    if (!(solution.theta > 0.0 && solution.theta < theta_max))
      throw DesignFailure(n, "field angle outside (0, theta0 + delta)");
    if (step_out.alignment_residual > opts.alignment_warning && warnings)
      warnings->push_back("n=" + std::to_string(n) + ": alignment angle " +
                          std::to_string(step_out.alignment_residual) + " rad at optimum");
    return step_out;
  } catch (const DesignFailure&) {
    throw;
  } catch (const Error& e) {
    throw DesignFailure(n, e.what());
  }
}

inline DesignTable design_all(const CatheterSpec& spec, const EnvironmentSpec& env, const DesignOptions& opts = {}) {
  const int N = spec.segments();
  if (N < 2) throw DomainError("stiffness design needs N >= 2");
  detail::check_design_pose(spec);

  DesignTable table;
  table.parameters = Specs{spec, env};

  const double k1 = design_k1(spec, env);
  const auto second = design_k2(spec, env);
  table.lumen = second.lumen;
  table.stiffness = {k1, second.stiffness};
  for (int n = 1; n <= 2; ++n) {
    DesignStep s;
    s.n = n;
    s.stiffness = table.stiffness[n - 1];
    s.theta = second.theta;
    s.angles = second.angles;
    table.steps.push_back(s);
  }

  CatheterSpec partial = spec;
  InitialGuess warm;
  warm.theta = second.theta;
  warm.angles = Eigen::Vector2d::Constant(second.angles[0] / 2.0);
  for (int n = 3; n <= N; ++n) {
    for (int i = 0; i < n - 1; ++i) partial.springs[i].bending_stiffness = table.stiffness[i];
    const auto step = design_kn(n, partial, env, table.lumen, warm, opts, &table.warnings);
    table.stiffness.push_back(step.stiffness);
    table.steps.push_back(step);

    warm.theta = step.theta;
    warm.angles.resize(n);
    warm.angles[0] = opts.solve.seed_angle;
    warm.angles.tail(n - 1) = step.angles.head(n - 1);
  }
  return table;
}

// --- CSV --------------------------------------------------------------------

inline std::string design_table_csv(const DesignTable& t) {
  std::ostringstream os;
  os << "# magchain-csv v1 design_table\n";
  os << "n,k_b_design_Nm_per_rad,theta_star_deg,alignment_residual_rad\n";
  for (const auto& s : t.steps)
    os << s.n << ',' << csv::fmt("%.6e", s.stiffness) << ',' << csv::fmt("%.6f", units::to_deg(s.theta)) << ','
       << csv::fmt("%.3e", s.alignment_residual) << '\n';
  return os.str();
}

inline std::string design_trace_csv(const DesignTable& t) {
  std::ostringstream os;
  os << "# magchain-csv v1 design_trace\n";
  os << "n,theta_star_deg,evaluations";
  const int N = t.size();
  for (int i = 1; i <= N; ++i) os << ",alpha_" << i << "_deg";
  os << ",lumen_y_mm,lumen_z_mm\n";
  for (const auto& s : t.steps) {
    os << s.n << ',' << csv::fmt("%.9f", units::to_deg(s.theta)) << ',' << s.evaluations;
    for (int i = 0; i < N; ++i)
      os << ',' << (i < s.angles.size() ? csv::fmt("%.9f", units::to_deg(s.angles[i])) : std::string{});
    os << ',' << csv::fmt("%.6f", units::to_mm(t.lumen.y())) << ',' << csv::fmt("%.6f", units::to_mm(t.lumen.z()))
       << '\n';
  }
  return os.str();
}

// Reads k_b,1..N from a design-table CSV (rows in n order).
inline std::vector<double> read_design_stiffness(const std::string& path) {
  const auto table = csv::read_file(path);
  const int col_n = table.column("n");
  const int col_k = table.column("k_b_design_Nm_per_rad");
  if (col_n < 0 || col_k < 0) throw ConfigError(path, "missing n / k_b_design_Nm_per_rad columns");
  std::vector<double> k;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::string where = path + ":row " + std::to_string(r + 1);
    if (static_cast<int>(row.size()) <= std::max(col_n, col_k)) throw ConfigError(where, "short row");
    if (static_cast<int>(csv::to_number(row[col_n], where)) != static_cast<int>(r + 1))
      throw ConfigError(where, "rows must be numbered 1..N in order");
    const double v = csv::to_number(row[col_k], where);
    if (!(v > 0.0)) throw ValidationError("k_b > 0", where + ": stiffness must be positive");
    k.push_back(v);
  }
  if (k.empty()) throw ConfigError(path, "design table is empty");
  return k;
}

}  // namespace magchain
