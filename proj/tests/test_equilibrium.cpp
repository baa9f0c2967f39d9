#include "magchain/designer.hpp"
#include "magchain/equilibrium.hpp"

#include "oracle.hpp"

#include <gtest/gtest.h>

#include <random>
#include <sstream>

using namespace magchain;

namespace {

const Specs kDefault = default_spec();
const std::vector<double> kReferenceK{3.81e-5, 13.37e-5, 18.71e-5, 21.28e-5, 22.54e-5, 23.17e-5};

struct Quadratic {
  Eigen::VectorXd raw(const Eigen::VectorXd& x) const {
    Eigen::VectorXd r(2);
    r << x[0] * x[0] - 2.0, x[0] * x[1] - 1.0;
    return r;
  }
  Eigen::VectorXd scales(const Eigen::VectorXd&) const { return Eigen::VectorXd::Ones(2); }
};

}  // namespace

TEST(Newton, SolvesSmallSystem) {
  const auto r = solve_newton(Quadratic{}, Eigen::Vector2d(1.0, 1.0), Eigen::Vector2d(0, 0), Eigen::Vector2d(5, 5), {});
  ASSERT_TRUE(r.converged);
  EXPECT_NEAR(r.x[0], std::sqrt(2.0), 1e-10);
  EXPECT_NEAR(r.x[1], 1.0 / std::sqrt(2.0), 1e-10);
}

TEST(Newton, ReportsBestIterateWhenInfeasible) {
  // The root x0 = sqrt 2 lies outside [0, 1].
  const auto r = solve_newton(Quadratic{}, Eigen::Vector2d(0.5, 0.5), Eigen::Vector2d(0, 0), Eigen::Vector2d(1, 5), {});
  EXPECT_FALSE(r.converged);
  EXPECT_LE(r.x[0], 1.0);
  EXPECT_TRUE(std::isfinite(r.residual_norm));
}

TEST(Equilibrium, ScaleFactorDecade) {
  for (double v : {3.2e-9, 1e-6, 9.99e-5, 0.5, 7.0}) {
    const double s = scale_factor(v);
    EXPECT_GE(s * v, 1.0 - 1e-12) << v;
    EXPECT_LT(s * v, 10.0) << v;
  }
  EXPECT_EQ(scale_factor(0.0), 1.0);
  EXPECT_EQ(scale_factor(0.0, 1e-12), 1e12);
}

TEST(Equilibrium, PositiveTorqueIncreasesBend) { EXPECT_EQ(bending_torque_orientation(), 1.0); }

TEST(Equilibrium, NeighborAndAllPairsAgreeForOneSegment) {
  for (double a : {0.0, 0.4, 1.2, 2.5}) {
    const Eigen::VectorXd angles = Eigen::VectorXd::Constant(1, a);
    const Vec3 n = spring_torque_sum(1, angles, 1.0, kDefault.catheter, kDefault.environment, InteractionModel::nearest_neighbor);
    const Vec3 p = spring_torque_sum(1, angles, 1.0, kDefault.catheter, kDefault.environment, InteractionModel::all_pairs);
    EXPECT_LE((n - p).norm(), 1e-15 * n.norm() + 1e-20) << a;
  }
}

TEST(Equilibrium, TorquesArePlanar) {
  const Eigen::Vector3d a(0.2, 0.9, 1.4);
  for (int n = 1; n <= 3; ++n) {
    const Vec3 t = spring_torque_sum(n, a, 2.0, kDefault.catheter, kDefault.environment);
    EXPECT_LE(std::abs(t.y()) + std::abs(t.z()), 1e-18);
  }
}

TEST(Equilibrium, FieldOnlyTorqueMatchesClosedForm) {
  const double m = kDefault.catheter.magnet.dipole_moment(), B = kDefault.environment.field;
  const Eigen::Vector2d a(0.3, 0.5);
  const double theta = 1.5;
  const Vec3 t = spring_torque_sum(2, a, theta, kDefault.catheter, kDefault.environment, InteractionModel::field_only);
  // z_1 is at a1 + a2, z_2 at a2 from +z.
  EXPECT_NEAR(t.x(), m * B * (std::sin(theta - 0.8) + std::sin(theta - 0.5)), 1e-18);
}

TEST(Equilibrium, StraightChainUnderAxialField) {
  const auto spec = kDefault.catheter.with_stiffnesses(kReferenceK);
  const auto c = solve_shape_for_field(0.0, 6, spec, kDefault.environment, Eigen::VectorXd::Zero(6));
  EXPECT_LE(c.angles.lpNorm<Eigen::Infinity>(), 1e-12);
}

TEST(Equilibrium, OneSegmentMatchesBisection) {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> theta(units::from_deg(5.0), units::from_deg(175.0));
  std::uniform_real_distribution<double> k(1.7e-4, 1e-3);
  std::uniform_real_distribution<double> field(0.02, 0.06);
  const double m = kDefault.catheter.magnet.dipole_moment();
  const double ls = kDefault.catheter.spring_length(), lm = kDefault.catheter.magnet.length;
  for (int i = 0; i < 50; ++i) {
    const double th = theta(rng), kb = k(rng), B = field(rng);
    auto spec = make_catheter(kDefault.catheter.magnet, 1, ls, std::numbers::pi / 2.0, {kb});
    EnvironmentSpec env = kDefault.environment;
    env.field = B;
    const auto c = solve_shape_continuation(th, 1, spec, env);
    const double ref = oracle::bisect(
        [&](double a) { return oracle::one_segment_torque(a, th, B, m, ls, lm) - kb * a; }, 0.0, th);
    EXPECT_NEAR(c.angles[0], ref, 1e-9) << "case " << i;
  }
}

TEST(Equilibrium, ContinuationIsMonotone) {
  const auto spec = kDefault.catheter.with_stiffnesses(kReferenceK);
  Eigen::VectorXd a = Eigen::VectorXd::Zero(2);
  double previous = 0.0;
  for (int deg = 1; deg <= 200; ++deg) {
    const auto c = solve_shape_for_field(units::from_deg(deg), 2, spec, kDefault.environment, a);
    a = c.angles;
    EXPECT_GE(a.sum(), previous - 1e-12) << deg;
    previous = a.sum();
  }
}

TEST(Equilibrium, DesignPointBendsHalfTurn) {
  const auto table = design_all(kDefault.catheter, kDefault.environment);
  const auto spec = kDefault.catheter.with_stiffnesses(table.stiffness);
  const auto c = solve_shape_continuation(units::from_deg(200.0), 2, spec, kDefault.environment);
  EXPECT_NEAR(c.angles[0], std::numbers::pi / 2.0, 1e-8);
  EXPECT_NEAR(c.angles[1], std::numbers::pi / 2.0, 1e-8);
}

TEST(Equilibrium, SolvedResidualIsBelowTolerance) {
  const auto spec = kDefault.catheter.with_stiffnesses(kReferenceK);
  const auto c = solve_shape_continuation(units::from_deg(120.0), 4, spec, kDefault.environment);
  const auto r = scaled_residual(c.angles, c.theta, spec, kDefault.environment);
  EXPECT_LE(r.values.lpNorm<Eigen::Infinity>(), 1e-10);
  for (Eigen::Index n = 0; n < r.scales.size(); ++n) {
    const double v = r.scales[n] * r.raw_torques[n].norm();
    EXPECT_GE(v, 1.0 - 1e-12);
    EXPECT_LT(v, 10.0);
  }
}

TEST(Equilibrium, MissingStiffnessIsDomainError) {
  EXPECT_THROW(solve_shape_for_field(1.0, 2, kDefault.catheter, kDefault.environment, Eigen::VectorXd::Zero(2)),
               DomainError);
  const auto spec = kDefault.catheter.with_stiffnesses(kReferenceK);
  EXPECT_THROW(solve_shape_for_field(1.0, 7, spec, kDefault.environment, Eigen::VectorXd::Zero(7)), DomainError);
  EXPECT_THROW(solve_shape_for_field(1.0, 2, spec, kDefault.environment, Eigen::VectorXd::Zero(3)), DomainError);
}

TEST(Equilibrium, IterationCapSurfacesAsSolverFailure) {
  const auto spec = kDefault.catheter.with_stiffnesses(kReferenceK);
  SolveOptions opts;
  opts.max_iterations = 1;
  try {
    solve_shape_for_field(units::from_deg(170.0), 6, spec, kDefault.environment, Eigen::VectorXd::Zero(6), opts);
    FAIL() << "expected SolverFailure";
  } catch (const SolverFailure& e) {
    EXPECT_EQ(e.best_iterate().size(), 6);
    EXPECT_GT(e.residual_norm(), opts.tolerance);
  }
}

TEST(Equilibrium, AlignedTwoSegmentClosure) {
  const auto spec = kDefault.catheter.with_stiffnesses(kReferenceK);
  for (double deg : {0.0, 45.0, 90.0, 180.0}) {
    const double g = units::from_deg(deg);
    const auto init = initial_values(g, 2, nullptr, kDefault.environment.steering_margin);
    const auto c = solve_shape_aligned(g, 2, spec, kDefault.environment, Vec3::Zero(), init);
    EXPECT_NEAR(c.angles.sum(), g, 1e-10) << deg;
  }
}

TEST(Equilibrium, InitialValues) {
  const auto g2 = initial_values(std::numbers::pi, 2, nullptr, units::from_deg(20.0));
  EXPECT_NEAR(g2.theta, units::from_deg(200.0), 1e-15);
  EXPECT_NEAR(g2.angles[0], std::numbers::pi / 2.0, 1e-15);
  EXPECT_THROW(initial_values(1.0, 3, nullptr, 0.3), DomainError);
  EXPECT_THROW(initial_values(1.0, 1, nullptr, 0.3), DomainError);

  ChainConfiguration prev = compose_world_poses(Eigen::Vector2d(0.4, 0.6), kDefault.catheter);
  prev.theta = 1.7;
  const auto g3 = initial_values(1.0, 3, &prev, 0.3, 1e-4);
  EXPECT_EQ(g3.theta, 1.7);
  EXPECT_EQ(g3.angles, Eigen::Vector3d(1e-4, 0.4, 0.6));
  EXPECT_THROW(initial_values(1.0, 4, &prev, 0.3), DomainError);
}

TEST(Equilibrium, IterationTraceCsv) {
  std::vector<IterationRecord> trace{{0, 1.0, Eigen::Vector2d(0.0, std::numbers::pi)}};
  std::ostringstream os;
  write_iteration_trace(os, trace);
  EXPECT_EQ(os.str(),
            "# magchain-csv v1 iteration_trace\nstep,residual_norm,x0_deg,x1_deg\n0,1.000000e+00,0.000000000,180.000000000\n");
}
