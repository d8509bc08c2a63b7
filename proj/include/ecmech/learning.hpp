#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "ecmech/dual.hpp"
#include "ecmech/error.hpp"
#include "ecmech/instance.hpp"
#include "ecmech/messages.hpp"
#include "ecmech/price_set.hpp"

namespace ecm {

struct LearningConfig {
  /// Defaults to delta' / ||A_tilde||.
  std::optional<double> alpha;
  int max_iters = 100;
  /// Stop once ||m(k) - m(k-1)|| <= stop_tol; 0 disables the test.
  double stop_tol = 0.0;
  /// Initial (lambda, mu); defaults to the projection of the origin.
  std::optional<Vector> initial_prices;
  /// Optimal (lambda, mu) for the distance column of the trace.
  std::optional<Vector> reference;
};

struct LearningRecord {
  int k = 0;
  Matrix q;  // N x L
  Matrix s;  // N x T
  DemandMatrix y;
  std::optional<double> dist_to_opt;
  double dual_value = 0.0;
};

struct LearningTrace {
  std::vector<LearningRecord> records;  // k = 0 .. K
  std::string stop_reason;
  double alpha = 0.0;
  double delta = 0.0;
  double a_tilde_norm = 0.0;
  /// alpha exceeded 2 delta' / ||A_tilde||.
  bool step_size_warning = false;
};

struct LearningResult {
  CentralMessageProfile profile;
  LearningTrace trace;
};

/// One price update shared by every user: gradient step on (q, s) followed by
/// projection onto the price set.
inline Vector price_step(const Instance& inst, const PriceSet& P,
                         const Vector& prices, const DemandMatrix& y,
                         double alpha) {
  const Vector g = dual_gradient(inst, y);
  return P.project(prices - alpha * g);
}

/// Dual projected-gradient learning dynamics. Every user keeps its own copy
/// of (q, s) and applies the same update, so the copies agree exactly.
inline LearningResult learn(const Instance& inst, const PriceSet& P,
                            const LearningConfig& cfg = {}) {
  const int N = inst.n_users();
  const int T = inst.horizon();
  const int L = inst.n_constraints();
  if (P.dim() != L + T) throw DimensionMismatch("price set does not match instance");
  if (cfg.max_iters < 0) throw ScenarioError("max_iters must be nonnegative");

  LearningTrace trace;
  trace.delta = strong_concavity_parameter(inst);
  trace.a_tilde_norm = spectral_norm(P.A_tilde());
  trace.alpha = cfg.alpha.value_or(trace.delta / trace.a_tilde_norm);
  if (!(trace.alpha > 0.0) || !std::isfinite(trace.alpha)) {
    throw ScenarioError("step size must be positive and finite");
  }
  trace.step_size_warning =
      trace.alpha > 2.0 * trace.delta / trace.a_tilde_norm;

  Vector start = cfg.initial_prices ? *cfg.initial_prices : Vector::Zero(L + T);
  if (start.size() != L + T) throw DimensionMismatch("initial prices have wrong length");
  start = P.project(start);

  // Per-user price copies: row i of q and s.
  Matrix q = start.head(L).transpose().replicate(N, 1);
  Matrix s = start.tail(T).transpose().replicate(N, 1);
  auto prices_of = [&](int i) {
    Vector v(L + T);
    v.head(L) = q.row(i).transpose();
    v.tail(T) = s.row(i).transpose();
    return v;
  };
  auto demands = [&]() {
    DemandMatrix y(N, T);
    for (int i = 0; i < N; ++i) {
      const DemandMatrix yi = demand_response(inst, prices_of(i));
      y.row(i) = yi.row(i);
    }
    return y;
  };
  auto record = [&](int k, const DemandMatrix& y) {
    LearningRecord r;
    r.k = k;
    r.q = q;
    r.s = s;
    r.y = y;
    const Vector p0 = prices_of(0);
    if (cfg.reference) r.dist_to_opt = (p0 - *cfg.reference).norm();
    r.dual_value = dual_value(inst, p0);
    trace.records.push_back(std::move(r));
  };

  DemandMatrix y = demands();
  record(0, y);
  trace.stop_reason = "max_iters";
  for (int k = 1; k <= cfg.max_iters; ++k) {
    Matrix q_next(N, L);
    Matrix s_next(N, T);
    for (int i = 0; i < N; ++i) {
      const Vector next = price_step(inst, P, prices_of(i), y, trace.alpha);
      q_next.row(i) = next.head(L).transpose();
      s_next.row(i) = next.tail(T).transpose();
    }
    const double change_sq = (q_next - q).squaredNorm() + (s_next - s).squaredNorm();
    q = std::move(q_next);
    s = std::move(s_next);
    const DemandMatrix y_next = demands();
    const double change = std::sqrt(change_sq + (y_next - y).squaredNorm());
    y = y_next;
    record(k, y);
    if (cfg.stop_tol > 0.0 && change <= cfg.stop_tol) {
      trace.stop_reason = "stalled";
      break;
    }
  }

  CentralMessageProfile m;
  m.y = y;
  m.q = q;
  m.s = s;
  m.beta = Matrix(N, T);
  for (int i = 0; i < N; ++i) m.beta.row(i) = y.row(next_user(i, N));
  return {std::move(m), std::move(trace)};
}

}  // namespace ecm
