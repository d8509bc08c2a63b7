// Builds a two-household community in code, solves for the welfare optimum,
// and checks that the mechanism's equilibrium and the learning dynamics both
// reach it.
#include <iostream>

#include "ecmech/ecmech.hpp"

int main() {
  using namespace ecm;

  InstanceSpec spec;
  spec.n_users = 2;
  spec.horizon = 3;
  for (int i = 0; i < spec.n_users; ++i) {
    for (int t = 0; t < spec.horizon; ++t) {
      spec.utilities.push_back(UtilityFunction::scaled_log(1.0 + i + 0.5 * t, 1.0, 0.0, 4.0));
    }
  }
  spec.unit_prices = {0.2, 0.3, 0.25};
  spec.peak_price = 0.1;
  // A shared feeder limit of 3 units per slot.
  for (int t = 0; t < spec.horizon; ++t) {
    spec.rows.push_back({{{0, t, 1.0}, {1, t, 1.0}}, 3.0});
  }
  const Instance inst = build_instance(spec);

  const CentralSolution sol = solve_centralized(inst, {1e-12, 200000});
  std::cout << "optimal demand:\n" << sol.x << "\npeak " << sol.w << "\n";

  const CentralMessageProfile m = construct_ne(inst, sol);
  const NeReport ne = verify_ne(inst, m);
  std::cout << "equilibrium certified: " << (ne.pass ? "yes" : "no")
            << " (max improvement " << ne.max_improvement << ")\n";
  std::cout << "rebated budget balance: " << budget_report(inst, m).rebated << "\n";

  const PriceSet P = make_price_set(inst);
  LearningConfig cfg;
  cfg.max_iters = 20000;
  cfg.stop_tol = 1e-12;
  const LearningResult learned = learn(inst, P, cfg);
  std::cout << "learning stopped after " << learned.trace.records.back().k
            << " iterations, max demand error "
            << (learned.profile.y - sol.x).cwiseAbs().maxCoeff() << "\n";
  return ne.pass ? 0 : 1;
}
