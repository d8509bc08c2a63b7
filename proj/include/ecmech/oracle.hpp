#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <utility>

#include "ecmech/dual.hpp"
#include "ecmech/error.hpp"
#include "ecmech/instance.hpp"
#include "ecmech/price_set.hpp"

namespace ecm {

/// Primal-dual point of the epigraph program
///   max sum v(x) - sum_t p_t S_t - p0 w  s.t.  A x <= b,  S_t <= w.
struct CentralSolution {
  DemandMatrix x;
  double w = 0.0;
  Vector lambda;  // length L
  Vector mu;      // length T
};

struct KktReport {
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double comp_slackness = 0.0;
  double stationarity_residual = 0.0;
  double tol = 0.0;
  bool pass = false;

  double max_residual() const {
    return std::max({primal_residual, dual_residual, comp_slackness,
                     stationarity_residual});
  }
};

inline KktReport check_kkt(const Instance& inst, const CentralSolution& sol,
                           double tol = 1e-8) {
  inst.require_shape(sol.x);
  const int L = inst.n_constraints();
  const int T = inst.horizon();
  if (sol.lambda.size() != L || sol.mu.size() != T) {
    throw DimensionMismatch("multiplier lengths do not match the instance");
  }
  KktReport r;
  r.tol = tol;

  const Vector totals = sol.x.colwise().sum().transpose();
  const Vector e = L > 0 ? Vector(inst.b() - inst.A() * inst.flatten(sol.x))
                         : Vector(Vector::Zero(0));
  const Vector g = Vector::Constant(T, sol.w) - totals;

  if (L > 0) r.primal_residual = std::max(0.0, -e.minCoeff());
  r.primal_residual = std::max(r.primal_residual, std::max(0.0, -g.minCoeff()));

  if (L > 0) r.dual_residual = std::max(0.0, -sol.lambda.minCoeff());
  r.dual_residual = std::max(r.dual_residual, std::max(0.0, -sol.mu.minCoeff()));

  if (L > 0) {
    r.comp_slackness = (sol.lambda.array() * e.array()).abs().maxCoeff();
  }
  r.comp_slackness =
      std::max(r.comp_slackness, (sol.mu.array() * g.array()).abs().maxCoeff());

  Vector a_lam = Vector::Zero(inst.n_flat());
  if (L > 0) a_lam = inst.A().transpose() * sol.lambda;
  double stat = std::abs(inst.peak_price() - sol.mu.sum());
  for (int i = 0; i < inst.n_users(); ++i) {
    for (int t = 0; t < T; ++t) {
      const auto& u = inst.utility(i, t);
      if (!u.contains(sol.x(i, t))) {
        stat = std::numeric_limits<double>::infinity();
        continue;
      }
      const double res = u.derivative(sol.x(i, t)) - inst.unit_price(t) -
                         a_lam(inst.flat(i, t)) - sol.mu(t);
      stat = std::max(stat, std::abs(res));
    }
  }
  r.stationarity_residual = stat;
  r.pass = r.max_residual() <= tol;
  return r;
}

/// (x, max_t S_t)
inline std::pair<DemandMatrix, double> lift_to_epigraph(const DemandMatrix& x) {
  return {x, x.colwise().sum().maxCoeff()};
}

/// Objective of the epigraph program at (x, w).
inline double epigraph_objective(const Instance& inst, const DemandMatrix& x,
                                 double w) {
  const Vector totals = x.colwise().sum().transpose();
  return total_utility(inst, x) - inst.unit_prices().dot(totals) -
         inst.peak_price() * w;
}

/// Primal recovery from dual prices: x = demand_response, w = peak total.
inline CentralSolution recover_primal(const Instance& inst, const Vector& prices) {
  const int L = inst.n_constraints();
  CentralSolution s;
  s.x = demand_response(inst, prices);
  s.w = lift_to_epigraph(s.x).second;
  s.lambda = prices.head(L);
  s.mu = prices.tail(inst.horizon());
  return s;
}

class NotConverged : public Error {
 public:
  NotConverged(const std::string& what, CentralSolution best, KktReport report)
      : Error(what), best_(std::move(best)), report_(report) {}
  const CentralSolution& best() const { return best_; }
  const KktReport& report() const { return report_; }

 private:
  CentralSolution best_;
  KktReport report_;
};

struct SolveConfig {
  double tol = 1e-8;
  int max_iters = 200000;
};

struct SolveStats {
  int iterations = 0;
  KktReport kkt;
};

/// Dual projected gradient over the price set implied by the utility domains,
/// with a backtracking step, followed by primal recovery. Returns once the
/// recovered point passes check_kkt at cfg.tol.
inline CentralSolution solve_centralized(const Instance& inst,
                                         const SolveConfig& cfg = {},
                                         SolveStats* stats = nullptr) {
  const PriceSet P = make_price_set(inst);
  Vector lam = P.project(Vector::Zero(P.dim()));

  double step = 1.0;
  constexpr double kMaxStep = 1e6;
  constexpr double kMinStep = 1e-14;

  CentralSolution best;
  KktReport best_report;
  best_report.stationarity_residual = std::numeric_limits<double>::infinity();

  for (int k = 0; k <= cfg.max_iters; ++k) {
    const CentralSolution sol = recover_primal(inst, lam);
    const KktReport rep = check_kkt(inst, sol, cfg.tol);
    if (rep.max_residual() < best_report.max_residual()) {
      best = sol;
      best_report = rep;
    }
    if (rep.pass) {
      if (stats) *stats = {k, rep};
      return sol;
    }
    if (k == cfg.max_iters) break;

    // Backtrack until 1/step bounds the local Lipschitz constant of the
    // gradient; gradients stay accurate where dual values lose resolution.
    const Vector grad = dual_gradient(inst, sol.x);
    Vector cand;
    while (true) {
      cand = P.project(lam - step * grad);
      const Vector diff = cand - lam;
      const Vector grad_c = dual_gradient(inst, demand_response(inst, cand));
      if (step * (grad_c - grad).norm() <= diff.norm() || step <= kMinStep) break;
      step *= 0.5;
    }
    lam = cand;
    step = std::min(kMaxStep, step * 1.25);
  }

  std::ostringstream os;
  os << "dual gradient did not reach KKT tolerance " << cfg.tol
     << " (best residual " << best_report.max_residual() << ")";
  throw NotConverged(os.str(), best, best_report);
}

}  // namespace ecm
