// Designs the stiffness profile for the default chain, then traces the
// advancement into a 90 deg branch and prints the pivot spread.

#include "magchain/magchain.hpp"

#include <cstdio>

int main() {
  using namespace magchain;
  const auto specs = default_spec();
  const auto table = design_all(specs.catheter, specs.environment);
  for (const auto& s : table.steps) std::printf("k_b,%d = %.2fe-5 N*m/rad\n", s.n, s.stiffness * 1e5);

  const auto spec = specs.catheter.with_stiffnesses(table.stiffness);
  const auto trace = advancement_trace(units::from_deg(90.0), spec, specs.environment);
  for (const auto& c : trace.states)
    std::printf("t=%d  theta=%.2f deg  tip=(%.2f, %.2f) mm\n", c.t, units::to_deg(c.theta),
                units::to_mm(c.position(1).y()), units::to_mm(c.position(1).z()));
  const auto m = pivot_metrics(trace, spec);
  std::printf("pivot sigma %.4f mm, max spread %.4f mm\n", units::to_mm(m.sigma), units::to_mm(m.dmax));
}
