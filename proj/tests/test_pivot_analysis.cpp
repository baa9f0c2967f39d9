#include "magchain/designer.hpp"
#include "magchain/pivot_analysis.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace magchain;

namespace {

const Specs kDefault = default_spec();

const CatheterSpec& designed() {
  static const CatheterSpec spec =
      kDefault.catheter.with_stiffnesses(design_all(kDefault.catheter, kDefault.environment).stiffness);
  return spec;
}

}  // namespace

TEST(PivotMetrics, IdenticalPointsGiveZero) {
  const std::vector<Vec3> p(5, Vec3(1e-3, -2e-3, 3e-3));
  const auto m = pivot_metrics(p, 32.84e-3);
  EXPECT_EQ(m.sigma, 0.0);
  EXPECT_EQ(m.dmax, 0.0);
}

TEST(PivotMetrics, TwoPoints) {
  const double d = 0.3e-3;
  const std::vector<Vec3> p{Vec3(0, 0, 0), Vec3(0, d, 0)};
  const auto m = pivot_metrics(p, 32.84e-3);
  EXPECT_NEAR(m.dmax, d, 1e-18);
  EXPECT_NEAR(m.sigma, d / 2.0, 1e-18);
  EXPECT_NEAR(m.er_dmax, d / 32.84e-3, 1e-15);
}

TEST(PivotMetrics, TranslationInvariantAndOrdered) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1e-3, 1e-3);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Vec3> p(2 + trial % 5);
    for (auto& x : p) x = Vec3(0.0, u(rng), u(rng));
    const Vec3 shift(0.0, 10.0 * u(rng), 10.0 * u(rng));
    std::vector<Vec3> q = p;
    for (auto& x : q) x += shift;
    const auto a = pivot_metrics(p, 1.0), b = pivot_metrics(q, 1.0);
    EXPECT_NEAR(a.sigma, b.sigma, 1e-15);
    EXPECT_NEAR(a.dmax, b.dmax, 1e-15);
    EXPECT_LE(a.sigma, a.dmax);
    Vec3 mean = Vec3::Zero();
    for (const auto& x : p) mean += x;
    mean /= static_cast<double>(p.size());
    for (const auto& x : p) EXPECT_LE((x - mean).norm(), a.dmax + 1e-18);
  }
}

TEST(Efficiency, BendingEfficiencyConventions) {
  const auto& spec = kDefault.catheter;
  EXPECT_EQ(bending_efficiency(compose_world_poses(Eigen::Vector2d(0.3, 0.9), spec)), 1.0);
  EXPECT_NEAR(bending_efficiency(compose_world_poses(Eigen::VectorXd::Constant(6, 0.2), spec)), 2.0 / 6.0, 1e-15);
  EXPECT_EQ(bending_efficiency(compose_world_poses(Eigen::VectorXd::Zero(4), spec)), 1.0);
  EXPECT_THROW(bending_efficiency(compose_world_poses(Eigen::VectorXd::Constant(1, 0.2), spec)), DomainError);
}

TEST(Efficiency, NonOptimizedProfile) {
  const std::vector<double> t1{3.81e-5, 13.37e-5, 18.71e-5, 21.28e-5, 22.54e-5, 23.17e-5};
  const auto k = nonoptimized_profile(t1);
  const std::vector<double> expected{3.81e-5, 13.37e-5, 46.34e-5, 46.34e-5, 92.68e-5, 92.68e-5};
  ASSERT_EQ(k.size(), 6u);
  for (int i = 0; i < 6; ++i) EXPECT_NEAR(k[i], expected[i], 1e-18);
  EXPECT_TRUE(std::is_sorted(k.begin(), k.end()));
  EXPECT_THROW(nonoptimized_profile(std::vector<double>(5, 1e-5)), DomainError);
}

TEST(Advancement, StraightTarget) {
  const auto tr = advancement_trace(0.0, designed(), kDefault.environment);
  ASSERT_EQ(tr.states.size(), 5u);
  for (const auto& s : tr.states) EXPECT_LE(s.angles.lpNorm<Eigen::Infinity>(), 1e-9);
  EXPECT_LE(pivot_metrics(tr, designed()).sigma, 1e-12);
  for (double r : propulsion_ratios(tr, designed())) EXPECT_NEAR(r, 1.0, 1e-9);
}

TEST(Advancement, QuarterTurnClosure) {
  const auto tr = advancement_trace(std::numbers::pi / 2.0, designed(), kDefault.environment);
  EXPECT_NEAR(tr.state(2).angles.sum(), std::numbers::pi / 2.0, 1e-10);
  for (int t = 2; t <= 6; ++t) {
    EXPECT_EQ(tr.state(t).t, t);
    EXPECT_EQ(tr.pivots[t - 2], tr.state(t).position(pivot_magnet_index(t)));
  }
}

TEST(Advancement, HalfTurnPivotIsStationary) {
  const auto tr = advancement_trace(std::numbers::pi, designed(), kDefault.environment);
  const auto m = pivot_metrics(tr, designed());
  EXPECT_LE(m.sigma, 1e-9);
  EXPECT_LE(m.dmax, 1e-9);
  for (int t = 2; t <= 6; ++t) EXPECT_NEAR(tr.state(t).angles[t - 1], std::numbers::pi / 2.0, 1e-8);
}

TEST(Advancement, EfficienciesStayInRange) {
  for (int deg = 0; deg <= 180; deg += 30) {
    const auto tr = advancement_trace(units::from_deg(deg), designed(), kDefault.environment);
    for (const auto& s : tr.states) {
      const double b = bending_efficiency(s);
      EXPECT_GT(b, 0.0);
      EXPECT_LE(b, 1.0);
    }
    EXPECT_LE(propulsion_efficiency(tr, designed()), 1.05);
  }
}

TEST(Advancement, NeedsAllStiffnesses) {
  EXPECT_THROW(advancement_trace(1.0, kDefault.catheter, kDefault.environment), DomainError);
}

TEST(Advancement, ShapeErrorAgainstItselfIsZero) {
  const auto tr = advancement_trace(1.0, designed(), kDefault.environment);
  EXPECT_EQ(shape_error(tr, tr), 0.0);
  auto other = tr;
  other.states.pop_back();
  EXPECT_THROW(shape_error(tr, other), DomainError);
}

TEST(Sweep, DesignPointHasZeroShapeError) {
  const SweepGrid grid{{0.5, 1.5}, {kDefault.environment.field}, {kDefault.environment.lumen_distance}};
  const auto r = sweep(grid, designed(), kDefault.environment);
  ASSERT_EQ(r.size(), 2u);
  for (const auto& x : r) {
    EXPECT_TRUE(x.ok) << x.error;
    EXPECT_EQ(x.shape_error, 0.0);
  }
}

TEST(Sweep, RecordOrderAndDeterminism) {
  const SweepGrid grid{SweepGrid::range_deg(0.0, 180.0, 45.0), {0.036, 0.04, 0.044}, {0.08}};
  const auto serial = sweep(grid, designed(), kDefault.environment, {}, 1);
  const auto parallel = sweep(grid, designed(), kDefault.environment, {}, 4);
  ASSERT_EQ(serial.size(), 15u);
  EXPECT_EQ(serial[5].field, 0.04);
  EXPECT_EQ(serial[5].gamma, 0.0);
  EXPECT_EQ(sweep_csv(serial, "sweep_B"), sweep_csv(parallel, "sweep_B"));
  EXPECT_EQ(success_fraction(serial), 1.0);
}

TEST(Sweep, FailedCellsAreRecorded) {
  SolveOptions opts;
  opts.max_iterations = 0;
  const SweepGrid grid{{1.0, 2.0}, {0.04}, {0.08}};
  const auto r = sweep(grid, designed(), kDefault.environment, opts, 2);
  ASSERT_EQ(r.size(), 2u);
  for (const auto& x : r) {
    EXPECT_FALSE(x.ok);
    EXPECT_NE(x.error.find("advancement state t=2"), std::string::npos) << x.error;
  }
  EXPECT_EQ(success_fraction(r), 0.0);
  const auto csv = pivot_vs_gamma_csv(r);
  EXPECT_NE(csv.find(",,,,failed\n"), std::string::npos);
}

TEST(Sweep, EmptyGridRejected) {
  EXPECT_THROW(sweep({{}, {0.04}, {0.08}}, designed(), kDefault.environment), DomainError);
}

TEST(Sweep, DefaultGrids) {
  EXPECT_EQ(SweepGrid::default_gammas().size(), 19u);
  EXPECT_EQ(SweepGrid::default_fields().size(), 11u);
  EXPECT_EQ(SweepGrid::default_lumen_distances().size(), 11u);
  EXPECT_NEAR(SweepGrid::default_lumen_distances().back(), 0.14, 1e-15);
}

TEST(Sweep, CsvHeaders) {
  const SweepGrid grid{{0.0}, {0.04}, {0.08}};
  const auto r = sweep(grid, designed(), kDefault.environment);
  EXPECT_EQ(pivot_vs_gamma_csv(r).substr(0, 80),
            std::string("# magchain-csv v1 pivot_vs_gamma\ngamma_deg,sigma_mm,dmax_mm,er_sigma_pct,er_dmax_pct,status\n")
                .substr(0, 80));
  const auto e = efficiency_csv({{"optimized", r}});
  EXPECT_NE(e.find("gamma_deg,bend_eff_mean,bend_eff_std,prop_eff_mean,profile,status\n0.0,1.000000,0.000000,1.000000,optimized,ok\n"),
            std::string::npos)
      << e;
}
