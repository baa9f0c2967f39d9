#pragma once

// Torque balance of the magnet-spring chain and the shape solves built on it.
//
// Spring n carries the field torques of magnets 1..n plus the interaction of
// magnet n+1 on magnet n (its torque and the moment of its force about the
// spring end s_2n). Interactions inside the distal sub-chain cancel in pairs.

#include "magchain/dipole.hpp"
#include "magchain/errors.hpp"
#include "magchain/kinematics.hpp"
#include "magchain/newton.hpp"
#include "magchain/units.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <ostream>
#include <string>
#include <vector>

namespace magchain {

enum class InteractionModel {
  nearest_neighbor,  // the model used by every residual
  all_pairs,         // diagnostic only: every magnet beyond the spring acts on every magnet before it
  field_only,        // no inter-magnet terms
};

// Interaction of magnet n+1 on magnet n, in frame n+1.
struct NeighborInteraction {
  WrenchPair inner;  // f_in, t_in
  Vec3 equivalent = Vec3::Zero();  // t_eq about s_2n
};

inline NeighborInteraction neighbor_interaction(int n, double alpha, const CatheterSpec& spec) {
  const double m = spec.magnet.dipole_moment();
  const double ls = spec.spring_length();
  const double lm = spec.magnet.length;
  const Dipole source{Vec3::Zero(), m * Vec3::UnitZ()};
  const Dipole target{magnet_offset(alpha, ls, lm), m * x_rotation(alpha).col(2)};
  NeighborInteraction out;
  out.inner.frame = Frame::of_magnet(n + 1);
  out.inner.force = dipole_force_on(target, source);
  out.inner.torque = dipole_torque_on(target, dipole_field(source, target.position));
  out.equivalent = equivalent_torque(out.inner.force, target.position, spring_far_end(alpha, ls, lm));
  return out;
}

// Sum of field and interaction torques loading spring n, in the world frame.
inline Vec3 spring_torque_sum(int n, const ChainConfiguration& c, const Vec3& field, const CatheterSpec& spec,
                              InteractionModel model = InteractionModel::nearest_neighbor) {
  if (n < 1 || n > c.t) throw DomainError("spring index " + std::to_string(n) + " outside 1.." + std::to_string(c.t));
  const double m = spec.magnet.dipole_moment();
  Vec3 total = Vec3::Zero();
  for (int i = 1; i <= n; ++i) total += (m * c.axis(i)).cross(field);
  if (model == InteractionModel::field_only) return total;

  if (model == InteractionModel::nearest_neighbor) {
    const auto link = neighbor_interaction(n, c.angles[n - 1], spec);
    total += c.pose(n + 1).rotation * (link.inner.torque + link.equivalent);
    return total;
  }

  const Vec3 pivot = c.pose(n + 1).rotation * spring_far_end(c.angles[n - 1], spec.spring_length(), spec.magnet.length) +
                     c.position(n + 1);
  for (int i = 1; i <= n; ++i) {
    const Dipole a{c.position(i), m * c.axis(i)};
    for (int j = n + 1; j <= c.t + 1; ++j) {
      const Dipole b{c.position(j), m * c.axis(j)};
      total += dipole_torque_on(a, dipole_field(b, a.position)) + (a.position - pivot).cross(dipole_force_on(a, b));
    }
  }
  return total;
}

inline Vec3 spring_torque_sum(int n, const Eigen::VectorXd& angles, double theta, const CatheterSpec& spec,
                              const EnvironmentSpec& env,
                              InteractionModel model = InteractionModel::nearest_neighbor) {
  return spring_torque_sum(n, compose_world_poses(angles, spec), field_vector(theta, env.field), spec, model);
}

// +1 when a positive x-torque increases the arc angle. Fixed by probing a
// straight one-segment chain under a slightly rotated field.
inline double bending_torque_orientation() {
  static const double sign = [] {
    const auto specs = default_spec();
    const Eigen::VectorXd straight = Eigen::VectorXd::Zero(1);
    const double tx = spring_torque_sum(1, straight, 1e-3, specs.catheter, specs.environment).x();
    return tx > 0.0 ? 1.0 : -1.0;
  }();
  return sign;
}

inline constexpr double kDefaultRelativeTorqueFloor = 1e-10;

// s = 10^-floor(log10 ||tau||), with ||tau|| floored at `floor`.
inline double scale_factor(double torque_norm, double floor = 0.0) {
  const double v = std::max(torque_norm, floor);
  if (!(v > 0.0)) return 1.0;
  return std::pow(10.0, -std::floor(std::log10(v)));
}

struct ResidualVector {
  Eigen::VectorXd values;         // s_n (tau_n - k_n alpha_n), dimensionless
  Eigen::VectorXd scales;         // s_n
  std::vector<Vec3> raw_torques;  // world-frame torque sums [N*m]
};

// Equilibrium terms for springs 1..count of configuration c.
inline ResidualVector equilibrium_terms(const ChainConfiguration& c, const Vec3& field, const CatheterSpec& spec,
                                        int count, double torque_floor) {
  const double sign = bending_torque_orientation();
  ResidualVector r;
  r.values.resize(count);
  r.scales.resize(count);
  r.raw_torques.reserve(count);
  for (int n = 1; n <= count; ++n) {
    const Vec3 tau = spring_torque_sum(n, c, field, spec);
    r.raw_torques.push_back(tau);
    r.scales[n - 1] = scale_factor(tau.norm(), torque_floor);
    r.values[n - 1] = sign * tau.x() - spec.stiffness(n) * c.angles[n - 1];
  }
  return r;
}

inline double torque_floor(const CatheterSpec& spec, const EnvironmentSpec& env, double relative) {
  return relative * spec.magnet.dipole_moment() * env.field;
}

inline ResidualVector scaled_residual(const Eigen::VectorXd& angles, double theta, const CatheterSpec& spec,
                                      const EnvironmentSpec& env,
                                      double relative_torque_floor = kDefaultRelativeTorqueFloor) {
  const int t = static_cast<int>(angles.size());
  if (t < 1) throw DomainError("residual needs t >= 1");
  auto r = equilibrium_terms(compose_world_poses(angles, spec), field_vector(theta, env.field), spec, t,
                             torque_floor(spec, env, relative_torque_floor));
  r.values = r.scales.cwiseProduct(r.values);
  return r;
}

struct SolveOptions {
  double tolerance = 1e-10;
  int max_iterations = 200;
  double alignment_scale = 10.0;  // s_a
  double seed_angle = 1e-4;       // delta [rad]
  double fd_step = 1e-7;
  double max_step = 0.5;
  double relative_torque_floor = kDefaultRelativeTorqueFloor;
  std::vector<IterationRecord>* trace = nullptr;

  NewtonOptions newton() const {
    if (!(tolerance > 0.0)) throw DomainError("solver tolerance must be positive");
    return {tolerance, max_iterations, fd_step, max_step};
  }
};

inline constexpr double kMaxArcAngle = 2.0 * std::numbers::pi * (1.0 - 1e-12);

namespace detail {

struct FieldShapeSystem {
  const CatheterSpec& spec;
  const EnvironmentSpec& env;
  double theta;
  double floor;

  ResidualVector terms(const Eigen::VectorXd& a) const {
    return equilibrium_terms(compose_world_poses(a, spec), field_vector(theta, env.field), spec,
                             static_cast<int>(a.size()), floor);
  }
  Eigen::VectorXd raw(const Eigen::VectorXd& a) const { return terms(a).values; }
  Eigen::VectorXd scales(const Eigen::VectorXd& a) const { return terms(a).scales; }
};

// x = [theta, alpha_1..alpha_t]
struct AlignedShapeSystem {
  const CatheterSpec& spec;
  const EnvironmentSpec& env;
  double gamma;
  Vec3 lumen;
  double alignment_scale;
  double floor;

  double closure(const ChainConfiguration& c) const {
    if (c.t == 2) return c.angles[0] + c.angles[1] - gamma;
    const Vec3 v = target_direction(c.position(1), lumen);
    return alignment_scale * signed_plane_angle(c.axis(1), v);
  }
  Eigen::VectorXd raw(const Eigen::VectorXd& x) const {
    const auto c = compose_world_poses(x.tail(x.size() - 1), spec);
    Eigen::VectorXd out(x.size());
    out[0] = closure(c);
    out.tail(x.size() - 1) = equilibrium_terms(c, field_vector(x[0], env.field), spec, c.t, floor).values;
    return out;
  }
  Eigen::VectorXd scales(const Eigen::VectorXd& x) const {
    const auto c = compose_world_poses(x.tail(x.size() - 1), spec);
    Eigen::VectorXd out(x.size());
    out[0] = 1.0;
    out.tail(x.size() - 1) = equilibrium_terms(c, field_vector(x[0], env.field), spec, c.t, floor).scales;
    return out;
  }
};

inline void check_stiffnesses(const CatheterSpec& spec, int t) {
  if (t < 1 || t > spec.segments())
    throw DomainError("t = " + std::to_string(t) + " outside 1.." + std::to_string(spec.segments()));
  if (!spec.has_stiffnesses(t)) throw DomainError("bending stiffnesses of segments 1.." + std::to_string(t) + " are required");
}

inline void check_solved_orientation(const ResidualVector& r, double tolerance) {
  const double sign = bending_torque_orientation();
  for (std::size_t n = 0; n < r.raw_torques.size(); ++n)
    if (sign * r.raw_torques[n].x() < -tolerance / r.scales[static_cast<Eigen::Index>(n)])
      throw SolverFailure("solved torque on spring " + std::to_string(n + 1) + " opposes its bend", {}, 0.0);
}

}  // namespace detail

inline ChainConfiguration solve_shape_for_field(double theta, int t, const CatheterSpec& spec,
                                                const EnvironmentSpec& env, const Eigen::VectorXd& init,
                                                const SolveOptions& opts = {}) {
  detail::check_stiffnesses(spec, t);
  if (init.size() != t) throw DomainError("initial guess length differs from t");
  const double floor = torque_floor(spec, env, opts.relative_torque_floor);
  const detail::FieldShapeSystem sys{spec, env, theta, floor};
  const auto res = solve_newton(sys, init, Eigen::VectorXd::Zero(t), Eigen::VectorXd::Constant(t, kMaxArcAngle),
                                opts.newton(), opts.trace);
  if (!res.converged)
    throw SolverFailure("shape solve did not converge (residual " + std::to_string(res.residual_norm) + ")", res.x,
                        res.residual_norm);

  const auto check = scaled_residual(res.x, theta, spec, env, opts.relative_torque_floor);
  const double norm = check.values.lpNorm<Eigen::Infinity>();
  if (!(norm <= opts.tolerance)) throw SolverFailure("re-checked residual above tolerance", res.x, norm);
  detail::check_solved_orientation(check, opts.tolerance);

  auto c = compose_world_poses(res.x, spec);
  c.theta = theta;
  return c;
}

// Marches theta from 0 to `theta` in steps of at most `step`, warm-starting each
// solve from the previous shape. Starts from the straight chain.
inline ChainConfiguration solve_shape_continuation(double theta, int t, const CatheterSpec& spec,
                                                   const EnvironmentSpec& env, const SolveOptions& opts = {},
                                                   double step = std::numbers::pi / 180.0) {
  const int count = std::max(1, static_cast<int>(std::ceil(std::abs(theta) / step)));
  Eigen::VectorXd alpha = Eigen::VectorXd::Zero(t);
  ChainConfiguration c;
  for (int i = 1; i <= count; ++i) {
    c = solve_shape_for_field(theta * i / count, t, spec, env, alpha, opts);
    alpha = c.angles;
  }
  return c;
}

struct InitialGuess {
  double theta = 0.0;
  Eigen::VectorXd angles;
};

// Warm-start schedule for aligned solves. t = 2 starts from the symmetric bend,
// t >= 3 prepends the seed angle to the previous state's solution.
inline InitialGuess initial_values(double gamma, int t, const ChainConfiguration* previous, double beta,
                                   double seed_angle = 1e-4) {
  if (t < 2) throw DomainError("aligned solves need t >= 2");
  InitialGuess g;
  if (t == 2) {
    g.theta = gamma + beta * (gamma / std::numbers::pi);
    g.angles = Eigen::Vector2d(gamma / 2.0, gamma / 2.0);
    return g;
  }
  if (!previous) throw DomainError("t >= 3 needs the t-1 solution as warm start");
  if (previous->t != t - 1) throw DomainError("warm start has length " + std::to_string(previous->t) + ", expected " + std::to_string(t - 1));
  g.theta = previous->theta;
  g.angles.resize(t);
  g.angles[0] = seed_angle;
  g.angles.tail(t - 1) = previous->angles;
  return g;
}

// Solves for (theta, alpha) such that the chain is in equilibrium and either
// alpha_1 + alpha_2 = gamma (t = 2) or z_1 points at the lumen center (t >= 3).
inline ChainConfiguration solve_shape_aligned(double gamma, int t, const CatheterSpec& spec, const EnvironmentSpec& env,
                                              const Vec3& lumen, const InitialGuess& init,
                                              const SolveOptions& opts = {}) {
  if (t < 2) throw DomainError("aligned solves need t >= 2");
  detail::check_stiffnesses(spec, t);
  if (init.angles.size() != t) throw DomainError("initial guess length differs from t");

  const double floor = torque_floor(spec, env, opts.relative_torque_floor);
  const detail::AlignedShapeSystem sys{spec, env, gamma, lumen, opts.alignment_scale, floor};
  Eigen::VectorXd x0(t + 1);
  x0[0] = init.theta;
  x0.tail(t) = init.angles;
  if (t >= 3) (void)target_direction(compose_world_poses(init.angles, spec).position(1), lumen);

  Eigen::VectorXd lo = Eigen::VectorXd::Zero(t + 1), hi = Eigen::VectorXd::Constant(t + 1, kMaxArcAngle);
  lo[0] = -2.0 * std::numbers::pi;
  hi[0] = 4.0 * std::numbers::pi;
  const auto res = solve_newton(sys, x0, lo, hi, opts.newton(), opts.trace);
  if (!res.converged)
    throw SolverFailure("aligned solve at t=" + std::to_string(t) + " did not converge (residual " +
                            std::to_string(res.residual_norm) + ")",
                        res.x, res.residual_norm);

  const Eigen::VectorXd angles = res.x.tail(t);
  auto c = compose_world_poses(angles, spec);
  c.theta = res.x[0];
  const double closure = std::abs(sys.closure(c));
  const auto check = scaled_residual(angles, c.theta, spec, env, opts.relative_torque_floor);
  const double norm = std::max(closure, check.values.lpNorm<Eigen::Infinity>());
  if (!(norm <= opts.tolerance)) throw SolverFailure("re-checked aligned residual above tolerance", res.x, norm);
  detail::check_solved_orientation(check, opts.tolerance);
  return c;
}

// step,residual_norm,x_0..x_k  (angles in degrees)
inline void write_iteration_trace(std::ostream& os, const std::vector<IterationRecord>& trace) {
  os << "# magchain-csv v1 iteration_trace\n";
  std::size_t width = 0;
  for (const auto& r : trace) width = std::max<std::size_t>(width, static_cast<std::size_t>(r.x.size()));
  os << "step,residual_norm";
  for (std::size_t i = 0; i < width; ++i) os << ",x" << i << "_deg";
  os << '\n';
  char buf[64];
  for (const auto& r : trace) {
    os << r.step;
    std::snprintf(buf, sizeof buf, ",%.6e", r.residual_norm);
    os << buf;
    for (Eigen::Index i = 0; i < r.x.size(); ++i) {
      std::snprintf(buf, sizeof buf, ",%.9f", units::to_deg(r.x[i]));
      os << buf;
    }
    os << '\n';
  }
}

}  // namespace magchain
