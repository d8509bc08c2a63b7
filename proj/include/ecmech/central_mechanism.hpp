#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "ecmech/best_response.hpp"
#include "ecmech/error.hpp"
#include "ecmech/instance.hpp"
#include "ecmech/messages.hpp"
#include "ecmech/oracle.hpp"

namespace ecm {

inline constexpr double kPeakTol = 1e-9;

/// Splits the peak price p0 over slots: proportionally to s_tilde when it is
/// nonzero, otherwise equally over the slots within peak_tol of max y_tilde.
/// The result sums to p0 (the rounding remainder goes to the last positive
/// entry).
inline Vector radial_pricing(const Vector& s_tilde, const Vector& y_tilde,
                             double p0, double peak_tol = kPeakTol) {
  const Eigen::Index T = s_tilde.size();
  if (y_tilde.size() != T || T == 0) {
    throw DimensionMismatch("radial pricing needs equal-length nonempty vectors");
  }
  if (s_tilde.minCoeff() < 0.0) {
    throw ScenarioError("radial pricing needs nonnegative suggestions");
  }
  Vector out = Vector::Zero(T);
  const double total = s_tilde.sum();
  if (total > 0.0) {
    out = p0 * s_tilde / total;
  } else {
    const double top = y_tilde.maxCoeff();
    int ties = 0;
    for (Eigen::Index t = 0; t < T; ++t) ties += y_tilde(t) >= top - peak_tol;
    for (Eigen::Index t = 0; t < T; ++t) {
      if (y_tilde(t) >= top - peak_tol) out(t) = p0 / ties;
    }
  }
  for (Eigen::Index t = T - 1; t >= 0; --t) {
    if (out(t) > 0.0) {
      double rest = 0.0;
      for (Eigen::Index k = 0; k < T; ++k) {
        if (k != t) rest += out(k);
      }
      out(t) = p0 - rest;
      break;
    }
  }
  return out;
}

/// Quantities user i sees of the other users' messages.
struct MessageAggregates {
  Vector s_minus;     // mean of others' s, length T
  Vector q_minus;     // mean of others' q, length L
  Vector zeta_minus;  // sum_{j != i} y^j + beta^{i-1}, length T
  double z_minus = 0.0;
};

/// With a single user the means over the empty set of others are zero.
inline MessageAggregates aggregates(const Instance& inst,
                                    const CentralMessageProfile& m, int i) {
  const int N = inst.n_users();
  MessageAggregates a;
  a.s_minus = Vector::Zero(inst.horizon());
  a.q_minus = Vector::Zero(inst.n_constraints());
  a.zeta_minus = m.beta.row(prev_user(i, N)).transpose();
  for (int j = 0; j < N; ++j) {
    if (j == i) continue;
    a.s_minus += m.s.row(j).transpose();
    a.q_minus += m.q.row(j).transpose();
    a.zeta_minus += m.y.row(j).transpose();
  }
  if (N > 1) {
    a.s_minus /= static_cast<double>(N - 1);
    a.q_minus /= static_cast<double>(N - 1);
  }
  a.z_minus = a.zeta_minus.maxCoeff();
  return a;
}

struct CentralTaxBreakdown {
  double cost = 0.0;
  double pr_beta = 0.0;
  Vector con_l;  // length L
  Vector con_t;  // length T

  double total() const { return cost + pr_beta + con_l.sum() + con_t.sum(); }
};

inline CentralTaxBreakdown tax_breakdown(const Instance& inst,
                                         const CentralMessageProfile& m, int i,
                                         double peak_tol = kPeakTol) {
  const int N = inst.n_users();
  const int T = inst.horizon();
  const int L = inst.n_constraints();
  const MessageAggregates a = aggregates(inst, m, i);
  const Vector rp = radial_pricing(a.s_minus, a.zeta_minus, inst.peak_price(), peak_tol);
  const Vector yi = m.y.row(i).transpose();

  CentralTaxBreakdown b;
  b.cost = (inst.unit_prices() + rp).dot(yi);
  for (int l : inst.user_constraints(i)) b.cost += a.q_minus(l) * inst.row_dot_user(l, i, yi);

  b.pr_beta = (m.beta.row(i) - m.y.row(next_user(i, N))).squaredNorm();

  const Vector beta_prev = m.beta.row(prev_user(i, N)).transpose();
  b.con_l = Vector::Zero(L);
  for (int l = 0; l < L; ++l) {
    double others = 0.0;
    for (int j = 0; j < N; ++j) {
      if (j != i) others += inst.row_dot_user(l, j, m.y.row(j).transpose());
    }
    const double slack = inst.b()(l) - others - inst.row_dot_user(l, i, beta_prev);
    const double dq = m.q(i, l) - a.q_minus(l);
    b.con_l(l) = dq * dq + m.q(i, l) * slack;
  }
  b.con_t = Vector::Zero(T);
  for (int t = 0; t < T; ++t) {
    const double ds = m.s(i, t) - a.s_minus(t);
    b.con_t(t) = ds * ds + m.s(i, t) * (a.z_minus - a.zeta_minus(t));
  }
  return b;
}

inline double tax(const Instance& inst, const CentralMessageProfile& m, int i,
                  double peak_tol = kPeakTol) {
  return tax_breakdown(inst, m, i, peak_tol).total();
}

inline DemandMatrix allocate(const CentralMessageProfile& m) { return m.y; }

inline double payoff(const Instance& inst, const CentralMessageProfile& m, int i,
                     double peak_tol = kPeakTol) {
  return user_utility(inst, i, m.y.row(i).transpose()) - tax(inst, m, i, peak_tol);
}

/// Lifted equilibrium messages: y = x*, q = lambda*, s = mu*, beta^i = x^{i+1}.
inline CentralMessageProfile construct_ne(const Instance& inst,
                                          const CentralSolution& sol,
                                          double kkt_tol = 1e-6) {
  const KktReport rep = check_kkt(inst, sol, kkt_tol);
  if (!rep.pass) {
    std::ostringstream os;
    os << "solution fails KKT at tolerance " << kkt_tol << " (max residual "
       << rep.max_residual() << ")";
    throw KktFailed(os.str());
  }
  const int N = inst.n_users();
  CentralMessageProfile m;
  m.y = sol.x;
  m.q = sol.lambda.transpose().replicate(N, 1);
  m.s = sol.mu.cwiseMax(0.0).transpose().replicate(N, 1);
  m.q = m.q.cwiseMax(0.0);
  m.beta = Matrix(N, inst.horizon());
  for (int i = 0; i < N; ++i) m.beta.row(i) = sol.x.row(next_user(i, N));
  return m;
}

/// Coordinates of user i's message in the order y, q, s, beta.
inline std::vector<Coordinate> central_coordinates(const Instance& inst, int i) {
  std::vector<Coordinate> c;
  const int T = inst.horizon();
  for (int t = 0; t < T; ++t) {
    const auto& u = inst.utility(i, t);
    c.push_back({"y[" + std::to_string(t + 1) + "]", u.domain_lo(), u.domain_hi(),
                 CoordinateShape::Concave});
  }
  for (int l = 0; l < inst.n_constraints(); ++l) {
    c.push_back({"q[" + std::to_string(l + 1) + "]", 0.0,
                 std::numeric_limits<double>::infinity(), CoordinateShape::Quadratic});
  }
  for (int t = 0; t < T; ++t) {
    c.push_back({"s[" + std::to_string(t + 1) + "]", 0.0,
                 std::numeric_limits<double>::infinity(), CoordinateShape::Quadratic});
  }
  for (int t = 0; t < T; ++t) {
    c.push_back({"beta[" + std::to_string(t + 1) + "]",
                 -std::numeric_limits<double>::infinity(),
                 std::numeric_limits<double>::infinity(), CoordinateShape::Quadratic});
  }
  return c;
}

inline Vector pack_user(const CentralMessageProfile& m, int i) {
  const Eigen::Index T = m.y.cols();
  const Eigen::Index L = m.q.cols();
  Vector v(3 * T + L);
  v << m.y.row(i).transpose(), m.q.row(i).transpose(), m.s.row(i).transpose(),
      m.beta.row(i).transpose();
  return v;
}

inline void unpack_user(CentralMessageProfile& m, int i, const Vector& v) {
  const Eigen::Index T = m.y.cols();
  const Eigen::Index L = m.q.cols();
  m.y.row(i) = v.segment(0, T).transpose();
  m.q.row(i) = v.segment(T, L).transpose();
  m.s.row(i) = v.segment(T + L, T).transpose();
  m.beta.row(i) = v.segment(2 * T + L, T).transpose();
}

/// Numerical certificate that no unilateral deviation found by line search
/// or random sampling improves any user's payoff by more than cfg.tol.
inline NeReport verify_ne(const Instance& inst, const CentralMessageProfile& m,
                          const NeConfig& cfg = {}) {
  validate_profile(inst, m);
  auto probe = [&](int i) {
    CentralMessageProfile work = m;
    const auto coords = central_coordinates(inst, i);
    auto u = [&](const Vector& v) {
      unpack_user(work, i, v);
      return payoff(inst, work, i);
    };
    return probe_user(i, pack_user(m, i), coords, u, cfg);
  };
  return collect_probes(inst.n_users(), probe, cfg);
}

/// Tax with the budget rebate sum_l q^{-i,l} b^l / N subtracted.
inline double rebate_tax(const Instance& inst, const CentralMessageProfile& m, int i) {
  const MessageAggregates a = aggregates(inst, m, i);
  const double rebate =
      inst.n_constraints() > 0 ? a.q_minus.dot(inst.b()) / inst.n_users() : 0.0;
  return tax(inst, m, i) - rebate;
}

struct BudgetReport {
  double taxes = 0.0;
  double rebated_taxes = 0.0;
  double community_cost = 0.0;
  double gross = 0.0;     // taxes - cost
  double rebated = 0.0;   // rebated taxes - cost
};

inline BudgetReport budget_report(const Instance& inst, const CentralMessageProfile& m) {
  BudgetReport r;
  for (int i = 0; i < inst.n_users(); ++i) {
    r.taxes += tax(inst, m, i);
    r.rebated_taxes += rebate_tax(inst, m, i);
  }
  r.community_cost = community_cost(inst, allocate(m));
  r.gross = r.taxes - r.community_cost;
  r.rebated = r.rebated_taxes - r.community_cost;
  return r;
}

struct IrEntry {
  int user = 0;
  double payoff = 0.0;
  double outside_option = 0.0;  // v^i(0)
  double margin = 0.0;          // payoff - outside_option
  bool ok = false;
};

inline std::vector<IrEntry> ir_entries(const Instance& inst,
                                       const std::function<double(int)>& user_payoff,
                                       double tol) {
  std::vector<IrEntry> out;
  for (int i = 0; i < inst.n_users(); ++i) {
    IrEntry e;
    e.user = i;
    e.payoff = user_payoff(i);
    e.outside_option = user_utility(inst, i, Vector::Zero(inst.horizon()));
    e.margin = e.payoff - e.outside_option;
    e.ok = e.margin >= -tol;
    out.push_back(e);
  }
  return out;
}

inline std::vector<IrEntry> check_ir(const Instance& inst, const CentralMessageProfile& m,
                                     double tol = 1e-9) {
  return ir_entries(inst, [&](int i) { return payoff(inst, m, i); }, tol);
}

/// Per-slot unit price a user pays at a profile: p_t + RP_t + sum over the
/// user's constraints of q^{-i,l} a^{i,l}_t.
struct PriceDecomposition {
  Vector unit;
  Vector peak;
  Vector constraint;
  Vector total;
};

inline PriceDecomposition price_decomposition(const Instance& inst,
                                              const CentralMessageProfile& m, int i) {
  const int T = inst.horizon();
  const MessageAggregates a = aggregates(inst, m, i);
  PriceDecomposition d;
  d.unit = inst.unit_prices();
  d.peak = radial_pricing(a.s_minus, a.zeta_minus, inst.peak_price());
  d.constraint = Vector::Zero(T);
  for (int l : inst.user_constraints(i)) {
    for (int t = 0; t < T; ++t) d.constraint(t) += a.q_minus(l) * inst.coeff(i, l, t);
  }
  d.total = d.unit + d.peak + d.constraint;
  return d;
}

}  // namespace ecm
