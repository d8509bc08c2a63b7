// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "support.hpp"

namespace {

using namespace ecm;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

/// Collects the failed checks of one criterion.
class Criterion {
 public:
  explicit Criterion(int id) : id_(id) {}

  void check(bool ok, const std::string& what) {
    if (!ok) failures_.push_back(what);
  }
  void note(const std::string& s) { notes_.push_back(s); }

  bool report() const {
    const bool ok = failures_.empty();
    std::cout << "criterion " << id_ << ": " << (ok ? "PASS" : "FAIL") << "\n";
    for (const auto& n : notes_) std::cout << "    " << n << "\n";
    for (const auto& f : failures_) std::cout << "    failed: " << f << "\n";
    return ok;
  }

 private:
  int id_;
  std::vector<std::string> failures_;
  std::vector<std::string> notes_;
};

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

struct Shared {
  Scenario scenario = test::fixture_scenario();
  Instance inst = scenario.instance();
  CentralSolution tight = solve_centralized(inst, {1e-12, 200000});
  CentralMessageProfile ne = construct_ne(inst, tight);
};

bool criterion_1() {
  Criterion c(1);
  try {
    const Instance inst = test::fixture_instance();
    const auto t0 = Clock::now();
    const CentralSolution sol = solve_centralized(inst);
    const double elapsed = seconds_since(t0);
    const double dx = (sol.x - test::fixture_x()).cwiseAbs().maxCoeff();
    c.check(dx <= 1e-3, "x within 1e-3 (max error " + fmt(dx) + ")");
    c.check(std::abs(sol.lambda(0) - 0.2056) <= 1e-3, "lambda1 " + fmt(sol.lambda(0)));
    c.check(std::abs(sol.lambda(6) - 1.1056) <= 1e-3, "lambda7 " + fmt(sol.lambda(6)));
    c.check(std::abs(sol.mu(0) - 0.0) <= 1e-6 && std::abs(sol.mu(1) - 0.05) <= 1e-6,
            "mu = (0, 0.05)");
    const double closed = test::fixture_lambda7();
    c.check(std::abs(sol.lambda(6) - closed) <= 1e-6, "lambda7 closed form");
    c.check(elapsed < 5.0, "runtime " + fmt(elapsed) + " s");
    c.note("lambda1 " + fmt(sol.lambda(0)) + ", lambda7 " + fmt(sol.lambda(6)) +
           " (closed form " + fmt(closed) + "), max x error " + fmt(dx) + ", " +
           fmt(elapsed) + " s");
  } catch (const std::exception& e) {
    c.check(false, e.what());
  }
  return c.report();
}

bool criterion_2() {
  Criterion c(2);
  try {
    const Instance inst = test::fixture_instance();
    const CentralSolution sol = solve_centralized(inst);
    const KktReport base = check_kkt(inst, sol, 1e-6);
    c.check(base.pass, "oracle output passes at 1e-6 (residual " + fmt(base.max_residual()) + ")");
    int perturbed = 0, rejected = 0;
    for (int k = 0; k < inst.n_constraints() + inst.horizon(); ++k) {
      for (double d : {-1e-2, 1e-2}) {
        CentralSolution s = sol;
        if (k < inst.n_constraints()) {
          s.lambda(k) += d;
        } else {
          s.mu(k - inst.n_constraints()) += d;
        }
        ++perturbed;
        const bool fails = !check_kkt(inst, s, 1e-6).pass;
        rejected += fails;
        c.check(fails, "perturbing multiplier " + std::to_string(k + 1) + " by " + fmt(d));
      }
    }
    c.note(std::to_string(rejected) + "/" + std::to_string(perturbed) +
           " single-multiplier perturbations rejected");
  } catch (const std::exception& e) {
    c.check(false, e.what());
  }
  return c.report();
}

bool criterion_3(const Shared& s) {
  Criterion c(3);
  try {
    NeConfig cfg;
    cfg.deviation_samples = 10000;
    cfg.tol = 1e-7;
    const NeReport r = verify_ne(s.inst, s.ne, cfg);
    c.check(r.pass && r.max_improvement <= 1e-7,
            "verify_ne max improvement " + fmt(r.max_improvement));
    for (const auto& u : r.users) {
      c.check(u.joint_samples == 10000, "joint samples for user " + std::to_string(u.user + 1));
    }
    const double dx = (allocate(s.ne) - s.tight.x).cwiseAbs().maxCoeff();
    c.check(dx <= 1e-6, "allocation equals x* (error " + fmt(dx) + ")");
    c.note("max improvement " + fmt(r.max_improvement) + " over " +
           std::to_string(cfg.deviation_samples) + " joint deviations per user");
  } catch (const std::exception& e) {
    c.check(false, e.what());
  }
  return c.report();
}

bool criterion_4(const Shared& s) {
  Criterion c(4);
  try {
    const BudgetReport b = budget_report(s.inst, s.ne);
    const double expected = 0.2056 * 1.0 + 1.1056 * 2.0;
    c.check(std::abs(b.gross - expected) <= 1e-4, "gross " + fmt(b.gross));
    c.check(std::abs(b.rebated) <= 1e-9, "rebated " + fmt(b.rebated));
    c.note("gross " + fmt(b.gross) + " (expected " + fmt(expected) + "), rebated " +
           fmt(b.rebated));
  } catch (const std::exception& e) {
    c.check(false, e.what());
  }
  return c.report();
}

bool criterion_5(const Shared& s) {
  Criterion c(5);
  try {
    const auto ir = check_ir(s.inst, s.ne);
    c.check(ir.size() == 3, "three users");
    for (const auto& e : ir) {
      c.check(e.payoff >= e.outside_option, "user " + std::to_string(e.user + 1));
      c.note("user " + std::to_string(e.user + 1) + ": payoff " + fmt(e.payoff) +
             ", outside option " + fmt(e.outside_option) + ", margin " + fmt(e.margin));
    }
  } catch (const std::exception& e) {
    c.check(false, e.what());
  }
  return c.report();
}

bool criterion_6(const Shared& s) {
  Criterion c(6);
  try {
    TreeNetwork net = spanning_tree(3, s.scenario.network->edges);
    net.set_helpers(*s.scenario.network->phi);
    const DistMessageProfile m = construct_ne_dist(s.inst, net, s.tight);
    NeConfig cfg;
    cfg.tol = 1e-7;
    const NeReport r = verify_ne_dist(s.inst, net, m, cfg);
    c.check(r.pass, "verify_ne_dist max improvement " + fmt(r.max_improvement));
    const double n217 = m.users[1].n.at(0)(6);
    const double x1 = s.tight.x(0, 0) + s.tight.x(0, 1);
    c.check(std::abs(n217 - x1) <= 1e-6, "n^{2,1,7} = x11 + x12");
    c.check(std::abs(n217 - -1.5246) <= 1e-4, "n^{2,1,7} near -1.5246");
    double tax_gap = 0.0;
    for (int i = 0; i < 3; ++i) {
      tax_gap = std::max(tax_gap, std::abs(tax_dist(s.inst, net, extract_neighborhood(net, m, i)) -
                                           tax(s.inst, s.ne, i)));
    }
    c.check(tax_gap <= 1e-9, "distributed and central taxes agree (gap " + fmt(tax_gap) + ")");
    const SummaryConsistencyReport k = check_summary_consistency(s.inst, net, m, s.tight.x);
    c.check(k.max_residual() <= 1e-10, "summary consistency " + fmt(k.max_residual()));
    c.note("max improvement " + fmt(r.max_improvement) + ", n^{2,1,7} " + fmt(n217) +
           ", tax gap " + fmt(tax_gap) + ", consistency residual " + fmt(k.max_residual()));
  } catch (const std::exception& e) {
    c.check(false, e.what());
  }
  return c.report();
}

bool criterion_7(const Shared& s) {
  Criterion c(7);
  try {
    Vector ref(s.inst.n_constraints() + s.inst.horizon());
    ref << s.tight.lambda, s.tight.mu;
    const auto t0 = Clock::now();
    const PriceSet P = make_price_set(s.inst, *s.scenario.learning->bounds);
    LearningConfig cfg;
    cfg.alpha = 0.1;
    cfg.max_iters = 100;
    cfg.reference = ref;
    const LearningResult res = learn(s.inst, P, cfg);
    const double elapsed = seconds_since(t0);

    const double dy = (res.profile.y - s.tight.x).cwiseAbs().maxCoeff();
    c.check(dy <= 1e-3, "final demand error " + fmt(dy));
    const Vector start = P.project(Vector::Zero(P.dim()));
    Vector first(P.dim());
    first << res.trace.records[0].q.row(0).transpose(), res.trace.records[0].s.row(0).transpose();
    c.check(first == start, "starts at the projected origin");
    int increases = 0;
    double sk = 0, sy = 0, skk = 0, sky = 0;
    const auto& recs = res.trace.records;
    for (std::size_t k = 0; k < recs.size(); ++k) {
      const double d = *recs[k].dist_to_opt;
      if (k > 0 && d > *recs[k - 1].dist_to_opt + 1e-12) ++increases;
      const double y = std::log(d);
      sk += recs[k].k;
      sy += y;
      skk += double(recs[k].k) * recs[k].k;
      sky += recs[k].k * y;
    }
    const double n = static_cast<double>(recs.size());
    const double slope = (n * sky - sk * sy) / (n * skk - sk * sk);
    c.check(increases == 0, std::to_string(increases) + " distance increases");
    c.check(slope < 0.0, "log-distance slope " + fmt(slope));
    c.check(elapsed < 1.0, "runtime " + fmt(elapsed) + " s");
    c.note("max demand error " + fmt(dy) + ", final distance " + fmt(*recs.back().dist_to_opt) +
           ", log-distance slope " + fmt(slope) + ", " + fmt(elapsed) + " s");
  } catch (const std::exception& e) {
    c.check(false, e.what());
  }
  return c.report();
}

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

bool criterion_8() {
  Criterion c(8);
  try {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> U(0.0, 1.0);

    // Radial pricing normalisation.
    int rp_bad = 0, zero_branch = 0;
    for (int trial = 0; trial < 1000; ++trial) {
      const int T = 1 + static_cast<int>(U(rng) * 6);
      Vector st(T), yt(T);
      for (int t = 0; t < T; ++t) {
        st(t) = trial % 2 == 0 ? 0.0 : U(rng);
        yt(t) = std::round(3.0 * U(rng));
      }
      zero_branch += st.sum() == 0.0;
      const double p0 = U(rng);
      const Vector rp = radial_pricing(st, yt, p0);
      if (std::abs(rp.sum() - p0) > 4 * std::numeric_limits<double>::epsilon() * p0 ||
          rp.minCoeff() < 0.0) {
        ++rp_bad;
      }
    }
    c.check(rp_bad == 0, "radial pricing sum (" + std::to_string(rp_bad) + " bad)");

    // Projection idempotence and feasibility.
    const Scenario sc = test::fixture_scenario();
    const PriceSet P = make_price_set(sc.instance(), *sc.learning->bounds);
    int proj_bad = 0;
    std::normal_distribution<double> G(0.0, 2.0);
    for (int trial = 0; trial < 200; ++trial) {
      Vector z(P.dim());
      for (int k = 0; k < P.dim(); ++k) z(k) = G(rng);
      const Vector p = P.project(z);
      if (!P.contains(p) || (P.project(p) - p).lpNorm<Eigen::Infinity>() > 1e-10) ++proj_bad;
    }
    c.check(proj_bad == 0, "projection (" + std::to_string(proj_bad) + " bad)");

    // Oracle against brute force.
    double grid_err = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
      const Instance inst = test::random_box_instance(rng);
      const CentralSolution sol = solve_centralized(inst);
      const test::GridOptimum g = test::grid_optimum(inst, 1e-3);
      grid_err = std::max(grid_err, (sol.x - g.x).cwiseAbs().maxCoeff());
    }
    c.check(grid_err <= 5e-3, "grid search agreement " + fmt(grid_err));

    // nearest_via partition.
    int part_bad = 0;
    for (int trial = 0; trial < 50; ++trial) {
      const int n = 2 + static_cast<int>(U(rng) * 29);
      const TreeNetwork net = spanning_tree(n, test::random_tree_edges(rng, n));
      for (int i = 0; i < n; ++i) {
        std::set<int> allowed(net.neighbors(i).begin(), net.neighbors(i).end());
        allowed.insert(i);
        std::map<int, int> counts;
        for (int k = 0; k < n; ++k) {
          const int j = nearest_via(net, i, k);
          if (!allowed.count(j) || (j == i) != (k == i)) ++part_bad;
          ++counts[j];
        }
        int total = 0;
        for (const auto& [j, cnt] : counts) total += cnt;
        if (total != n) ++part_bad;
      }
    }
    c.check(part_bad == 0, "nearest_via partition (" + std::to_string(part_bad) + " bad)");

    // Locality of tax_dist: bit-identical under changes outside the neighbourhood.
    int local_bad = 0;
    for (int trial = 0; trial < 10; ++trial) {
      const int n = 3 + trial;
      const Instance inst = test::random_instance(rng, n, 2);
      TreeNetwork net = spanning_tree(n, test::random_tree_edges(rng, n));
      net.set_helpers(assign_helpers(net, LowestIndexHelper{}));
      const CentralSolution sol = solve_centralized(inst);
      DistMessageProfile m = construct_ne_dist(inst, net, sol, 1e-6);
      for (int i = 0; i < n; ++i) {
        const double before = tax_dist(inst, net, extract_neighborhood(net, m, i));
        DistMessageProfile changed = m;
        for (int j = 0; j < n; ++j) {
          if (j == i || net.adjacent(i, j)) continue;
          auto& u = changed.users[static_cast<std::size_t>(j)];
          u.y.array() += 0.1;
          u.q.array() += 0.2;
          for (auto& [k, v] : u.nu) v.array() -= 0.3;
          for (auto& [k, v] : u.n) v.array() += 0.4;
        }
        if (!same_bits(before, tax_dist(inst, net, extract_neighborhood(net, changed, i)))) {
          ++local_bad;
        }
      }
    }
    c.check(local_bad == 0, "tax_dist locality (" + std::to_string(local_bad) + " bad)");
    c.note("radial pricing: 1000 inputs (" + std::to_string(zero_branch) +
           " zero-suggestion); grid error " + fmt(grid_err));
  } catch (const std::exception& e) {
    c.check(false, e.what());
  }
  return c.report();
}

}  // namespace

int main() {
  bool ok = true;
  ok &= criterion_1();
  ok &= criterion_2();
  try {
    const Shared shared;
    ok &= criterion_3(shared);
    ok &= criterion_4(shared);
    ok &= criterion_5(shared);
    ok &= criterion_6(shared);
    ok &= criterion_7(shared);
  } catch (const std::exception& e) {
    std::cout << "shared setup failed: " << e.what() << "\n";
    for (int k = 3; k <= 7; ++k) std::cout << "criterion " << k << ": FAIL\n";
    ok = false;
  }
  ok &= criterion_8();
  return ok ? 0 : 1;
}
