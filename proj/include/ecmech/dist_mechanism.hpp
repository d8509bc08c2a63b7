#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ecmech/best_response.hpp"
#include "ecmech/central_mechanism.hpp"
#include "ecmech/error.hpp"
#include "ecmech/instance.hpp"
#include "ecmech/oracle.hpp"
#include "ecmech/tree.hpp"

namespace ecm {

/// One user's message in the distributed mechanism. Map keys are 0-based
/// users: beta is keyed by the users j this user helps (phi(j) == self),
/// n and nu by the user's tree neighbours.
struct DistUserMessage {
  Vector y;  // T
  Vector q;  // L
  Vector s;  // T
  std::map<int, Vector> beta;  // T each
  std::map<int, Vector> n;     // L each
  std::map<int, Vector> nu;    // T each
};

struct DistMessageProfile {
  std::vector<DistUserMessage> users;
};

/// The messages visible to user `focal`: its own and its neighbours'.
struct Neighborhood {
  int focal = 0;
  DistUserMessage self;
  std::map<int, DistUserMessage> neighbors;

  const DistUserMessage& of(int j) const {
    if (j == focal) return self;
    const auto it = neighbors.find(j);
    if (it == neighbors.end()) {
      std::ostringstream os;
      os << "message of user " << j + 1 << " is not visible to user " << focal + 1;
      throw MissingSummary(os.str());
    }
    return it->second;
  }
};

namespace detail {

inline const Vector& keyed(const std::map<int, Vector>& m, int key, int owner,
                           const char* what, Eigen::Index len) {
  const auto it = m.find(key);
  if (it == m.end()) {
    std::ostringstream os;
    os << "user " << owner + 1 << " has no " << what << " message for user "
       << key + 1;
    throw MissingSummary(os.str());
  }
  if (it->second.size() != len) {
    std::ostringstream os;
    os << what << " message of user " << owner + 1 << " for user " << key + 1
       << " has length " << it->second.size() << ", expected " << len;
    throw DimensionMismatch(os.str());
  }
  return it->second;
}

inline void require_keys(const std::map<int, Vector>& m, const std::vector<int>& keys,
                         int owner, const char* what, Eigen::Index len) {
  for (int k : keys) (void)keyed(m, k, owner, what, len);
  if (m.size() != keys.size()) {
    std::ostringstream os;
    os << "user " << owner + 1 << " sends " << what
       << " messages to users outside its required set";
    throw MissingSummary(os.str());
  }
}

}  // namespace detail

/// Checks that shapes and key sets match the network exactly.
inline void validate_profile(const Instance& inst, const TreeNetwork& net,
                             const DistMessageProfile& m) {
  const int N = inst.n_users();
  const int T = inst.horizon();
  const int L = inst.n_constraints();
  if (net.n_users() != N || static_cast<int>(m.users.size()) != N) {
    throw DimensionMismatch("profile, network and instance disagree on user count");
  }
  for (int i = 0; i < N; ++i) {
    const auto& u = m.users[static_cast<std::size_t>(i)];
    if (u.y.size() != T || u.q.size() != L || u.s.size() != T) {
      std::ostringstream os;
      os << "user " << i + 1 << " has wrongly sized y, q or s";
      throw DimensionMismatch(os.str());
    }
    if ((L > 0 && u.q.minCoeff() < 0.0) || u.s.minCoeff() < 0.0) {
      throw ScenarioError("price messages q and s must be nonnegative");
    }
    detail::require_keys(u.beta, net.helped_by(i), i, "beta", T);
    detail::require_keys(u.n, net.neighbors(i), i, "n", L);
    detail::require_keys(u.nu, net.neighbors(i), i, "nu", T);
  }
}

inline Neighborhood extract_neighborhood(const TreeNetwork& net,
                                         const DistMessageProfile& m, int i) {
  Neighborhood nb;
  nb.focal = i;
  nb.self = m.users[static_cast<std::size_t>(i)];
  for (int j : net.neighbors(i)) nb.neighbors.emplace(j, m.users[static_cast<std::size_t>(j)]);
  return nb;
}

/// f^{i,j,l} for every l: a^{j,l} y^j plus j's summaries away from i.
inline Vector constraint_summary(const Instance& inst, const TreeNetwork& net,
                                 const Neighborhood& nb, int j) {
  const int L = inst.n_constraints();
  const DistUserMessage& mj = nb.of(j);
  Vector f(L);
  for (int l = 0; l < L; ++l) f(l) = inst.row_dot_user(l, j, mj.y);
  for (int h : net.neighbors(j)) {
    if (h != nb.focal) f += detail::keyed(mj.n, h, j, "n", L);
  }
  return f;
}

/// f^{i,j}_t for every t: y^j plus j's demand summaries away from i.
inline Vector demand_summary(const Instance& inst, const TreeNetwork& net,
                             const Neighborhood& nb, int j) {
  const DistUserMessage& mj = nb.of(j);
  Vector f = mj.y;
  for (int h : net.neighbors(j)) {
    if (h != nb.focal) f += detail::keyed(mj.nu, h, j, "nu", inst.horizon());
  }
  return f;
}

struct DistTaxBreakdown {
  double cost = 0.0;
  Vector pr_n;     // L
  Vector con_l;    // L
  Vector pr_beta;  // T
  Vector pr_nu;    // T
  Vector con_t;    // T

  double total() const {
    return cost + pr_n.sum() + con_l.sum() + pr_beta.sum() + pr_nu.sum() + con_t.sum();
  }
};

/// Averages over the neighbourhood and the reconstructed aggregate demand.
struct DistAggregates {
  Vector s_minus;
  Vector q_minus;
  Vector zeta_minus;
  double z_minus = 0.0;
};

inline DistAggregates dist_aggregates(const Instance& inst, const TreeNetwork& net,
                                      const Neighborhood& nb) {
  const int i = nb.focal;
  const int T = inst.horizon();
  const auto& nbrs = net.neighbors(i);
  if (nbrs.empty()) throw InvalidHelper("distributed mechanism needs at least two users");
  DistAggregates a;
  a.s_minus = Vector::Zero(T);
  a.q_minus = Vector::Zero(inst.n_constraints());
  a.zeta_minus = detail::keyed(nb.of(net.helper(i)).beta, i, net.helper(i), "beta", T);
  for (int j : nbrs) {
    a.s_minus += nb.of(j).s;
    a.q_minus += nb.of(j).q;
    a.zeta_minus += demand_summary(inst, net, nb, j);
  }
  a.s_minus /= static_cast<double>(nbrs.size());
  a.q_minus /= static_cast<double>(nbrs.size());
  a.z_minus = a.zeta_minus.maxCoeff();
  return a;
}

/// Tax of the focal user, computed from its neighbourhood slice alone.
inline DistTaxBreakdown tax_dist_breakdown(const Instance& inst, const TreeNetwork& net,
                                           const Neighborhood& nb,
                                           double peak_tol = kPeakTol) {
  const int i = nb.focal;
  const int T = inst.horizon();
  const int L = inst.n_constraints();
  const DistUserMessage& mi = nb.self;
  const DistAggregates a = dist_aggregates(inst, net, nb);
  const Vector rp = radial_pricing(a.s_minus, a.zeta_minus, inst.peak_price(), peak_tol);

  DistTaxBreakdown b;
  b.cost = (inst.unit_prices() + rp).dot(mi.y);
  for (int l : inst.user_constraints(i)) b.cost += a.q_minus(l) * inst.row_dot_user(l, i, mi.y);

  Vector f_total = Vector::Zero(L);
  b.pr_n = Vector::Zero(L);
  b.pr_nu = Vector::Zero(T);
  for (int j : net.neighbors(i)) {
    const Vector f = constraint_summary(inst, net, nb, j);
    f_total += f;
    b.pr_n += (detail::keyed(mi.n, j, i, "n", L) - f).cwiseAbs2();
    const Vector g = demand_summary(inst, net, nb, j);
    b.pr_nu += (detail::keyed(mi.nu, j, i, "nu", T) - g).cwiseAbs2();
  }

  b.pr_beta = Vector::Zero(T);
  for (int j : net.helped_by(i)) {
    b.pr_beta += (detail::keyed(mi.beta, j, i, "beta", T) - nb.of(j).y).cwiseAbs2();
  }

  const Vector& beta_self = detail::keyed(nb.of(net.helper(i)).beta, i, net.helper(i), "beta", T);
  b.con_l = Vector::Zero(L);
  for (int l = 0; l < L; ++l) {
    const double slack = inst.b()(l) - f_total(l) - inst.row_dot_user(l, i, beta_self);
    const double dq = mi.q(l) - a.q_minus(l);
    b.con_l(l) = dq * dq + mi.q(l) * slack;
  }
  b.con_t = Vector::Zero(T);
  for (int t = 0; t < T; ++t) {
    const double ds = mi.s(t) - a.s_minus(t);
    b.con_t(t) = ds * ds + mi.s(t) * (a.z_minus - a.zeta_minus(t));
  }
  return b;
}

inline double tax_dist(const Instance& inst, const TreeNetwork& net,
                       const Neighborhood& nb, double peak_tol = kPeakTol) {
  return tax_dist_breakdown(inst, net, nb, peak_tol).total();
}

inline double payoff_dist(const Instance& inst, const TreeNetwork& net,
                          const Neighborhood& nb, double peak_tol = kPeakTol) {
  return user_utility(inst, nb.focal, nb.self.y) - tax_dist(inst, net, nb, peak_tol);
}

inline DemandMatrix allocate_dist(const DistMessageProfile& m) {
  const auto N = static_cast<Eigen::Index>(m.users.size());
  const Eigen::Index T = N > 0 ? m.users[0].y.size() : 0;
  DemandMatrix x(N, T);
  for (Eigen::Index i = 0; i < N; ++i) x.row(i) = m.users[static_cast<std::size_t>(i)].y.transpose();
  return x;
}

/// Equilibrium messages lifted from a KKT point: beta^{i,j} = x^j and the
/// summaries equal the totals of the subtree behind each neighbour.
inline DistMessageProfile construct_ne_dist(const Instance& inst, const TreeNetwork& net,
                                            const CentralSolution& sol,
                                            double kkt_tol = 1e-6) {
  const KktReport rep = check_kkt(inst, sol, kkt_tol);
  if (!rep.pass) {
    std::ostringstream os;
    os << "solution fails KKT at tolerance " << kkt_tol << " (max residual "
       << rep.max_residual() << ")";
    throw KktFailed(os.str());
  }
  if (!net.has_helpers()) throw InvalidHelper("network has no helper map");
  const int N = inst.n_users();
  const int L = inst.n_constraints();
  DistMessageProfile m;
  m.users.resize(static_cast<std::size_t>(N));
  for (int i = 0; i < N; ++i) {
    auto& u = m.users[static_cast<std::size_t>(i)];
    u.y = sol.x.row(i).transpose();
    u.q = sol.lambda.cwiseMax(0.0);
    u.s = sol.mu.cwiseMax(0.0);
    for (int j : net.helped_by(i)) u.beta[j] = sol.x.row(j).transpose();
    for (int j : net.neighbors(i)) {
      Vector n = Vector::Zero(L);
      Vector nu = Vector::Zero(inst.horizon());
      for (int h = 0; h < N; ++h) {
        if (h == i || net.nearest_via(i, h) != j) continue;
        for (int l = 0; l < L; ++l) n(l) += inst.row_dot_user(l, h, sol.x.row(h).transpose());
        nu += sol.x.row(h).transpose();
      }
      u.n[j] = n;
      u.nu[j] = nu;
    }
  }
  return m;
}

/// Coordinates of user i's distributed message: y, q, s, then beta, n, nu
/// in ascending key order.
inline std::vector<Coordinate> dist_coordinates(const Instance& inst, int i,
                                                const DistUserMessage& u) {
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<Coordinate> c;
  for (int t = 0; t < inst.horizon(); ++t) {
    const auto& f = inst.utility(i, t);
    c.push_back({"y[" + std::to_string(t + 1) + "]", f.domain_lo(), f.domain_hi(),
                 CoordinateShape::Concave});
  }
  for (int l = 0; l < inst.n_constraints(); ++l) {
    c.push_back({"q[" + std::to_string(l + 1) + "]", 0.0, inf, CoordinateShape::Quadratic});
  }
  for (int t = 0; t < inst.horizon(); ++t) {
    c.push_back({"s[" + std::to_string(t + 1) + "]", 0.0, inf, CoordinateShape::Quadratic});
  }
  auto add_block = [&](const std::map<int, Vector>& m, const std::string& name) {
    for (const auto& [j, v] : m) {
      for (Eigen::Index k = 0; k < v.size(); ++k) {
        c.push_back({name + "[" + std::to_string(j + 1) + "][" + std::to_string(k + 1) + "]",
                     -inf, inf, CoordinateShape::Quadratic});
      }
    }
  };
  add_block(u.beta, "beta");
  add_block(u.n, "n");
  add_block(u.nu, "nu");
  return c;
}

inline Vector pack_dist(const DistUserMessage& u) {
  std::vector<double> v(u.y.data(), u.y.data() + u.y.size());
  v.insert(v.end(), u.q.data(), u.q.data() + u.q.size());
  v.insert(v.end(), u.s.data(), u.s.data() + u.s.size());
  for (const auto* m : {&u.beta, &u.n, &u.nu}) {
    for (const auto& [j, x] : *m) v.insert(v.end(), x.data(), x.data() + x.size());
  }
  return Eigen::Map<Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline void unpack_dist(DistUserMessage& u, const Vector& v) {
  Eigen::Index k = 0;
  auto take = [&](Vector& x) {
    x = v.segment(k, x.size());
    k += x.size();
  };
  take(u.y);
  take(u.q);
  take(u.s);
  for (auto* m : {&u.beta, &u.n, &u.nu}) {
    for (auto& [j, x] : *m) take(x);
  }
}

inline NeReport verify_ne_dist(const Instance& inst, const TreeNetwork& net,
                               const DistMessageProfile& m, const NeConfig& cfg = {}) {
  validate_profile(inst, net, m);
  auto probe = [&](int i) {
    Neighborhood nb = extract_neighborhood(net, m, i);
    const auto coords = dist_coordinates(inst, i, nb.self);
    auto u = [&](const Vector& v) {
      unpack_dist(nb.self, v);
      return payoff_dist(inst, net, nb);
    };
    return probe_user(i, pack_dist(nb.self), coords, u, cfg);
  };
  return collect_probes(inst.n_users(), probe, cfg);
}

struct SummaryConsistencyReport {
  double recursion_n = 0.0;    // |n^{i,j,l} - f^{i,j,l}|
  double recursion_nu = 0.0;   // |nu^{i,j}_t - f^{i,j}_t|
  double closed_form_n = 0.0;  // |n^{i,j,l} - sum_{h: n(i,h)=j} a^{h,l} y*^h|
  double closed_form_nu = 0.0;
  double total_n = 0.0;        // |sum_j f^{i,j,l} - sum_{j != i} a^{j,l} y^j|
  double total_nu = 0.0;
  double tol = 0.0;
  bool pass = false;

  double max_residual() const {
    return std::max({recursion_n, recursion_nu, closed_form_n, closed_form_nu,
                     total_n, total_nu});
  }
};

inline SummaryConsistencyReport check_summary_consistency(const Instance& inst,
                                                          const TreeNetwork& net,
                                                          const DistMessageProfile& m,
                                                          const DemandMatrix& sol_y,
                                                          double tol = 1e-10) {
  validate_profile(inst, net, m);
  inst.require_shape(sol_y);
  const int N = inst.n_users();
  const int L = inst.n_constraints();
  const DemandMatrix y = allocate_dist(m);
  SummaryConsistencyReport r;
  r.tol = tol;
  auto amax = [](double& acc, const Vector& v) {
    if (v.size() > 0) acc = std::max(acc, v.cwiseAbs().maxCoeff());
  };
  for (int i = 0; i < N; ++i) {
    const Neighborhood nb = extract_neighborhood(net, m, i);
    const auto& mi = m.users[static_cast<std::size_t>(i)];
    Vector f_sum = Vector::Zero(L);
    Vector g_sum = Vector::Zero(inst.horizon());
    for (int j : net.neighbors(i)) {
      const Vector f = constraint_summary(inst, net, nb, j);
      const Vector g = demand_summary(inst, net, nb, j);
      f_sum += f;
      g_sum += g;
      amax(r.recursion_n, mi.n.at(j) - f);
      amax(r.recursion_nu, mi.nu.at(j) - g);
      Vector n_star = Vector::Zero(L);
      Vector nu_star = Vector::Zero(inst.horizon());
      for (int h = 0; h < N; ++h) {
        if (h == i || net.nearest_via(i, h) != j) continue;
        for (int l = 0; l < L; ++l) n_star(l) += inst.row_dot_user(l, h, sol_y.row(h).transpose());
        nu_star += sol_y.row(h).transpose();
      }
      amax(r.closed_form_n, mi.n.at(j) - n_star);
      amax(r.closed_form_nu, mi.nu.at(j) - nu_star);
    }
    Vector others_n = Vector::Zero(L);
    Vector others_nu = Vector::Zero(inst.horizon());
    for (int j = 0; j < N; ++j) {
      if (j == i) continue;
      for (int l = 0; l < L; ++l) others_n(l) += inst.row_dot_user(l, j, y.row(j).transpose());
      others_nu += y.row(j).transpose();
    }
    amax(r.total_n, f_sum - others_n);
    amax(r.total_nu, g_sum - others_nu);
  }
  r.pass = r.max_residual() <= tol;
  return r;
}

inline double dist_rebate_tax(const Instance& inst, const TreeNetwork& net,
                              const Neighborhood& nb) {
  const DistAggregates a = dist_aggregates(inst, net, nb);
  const double rebate =
      inst.n_constraints() > 0 ? a.q_minus.dot(inst.b()) / inst.n_users() : 0.0;
  return tax_dist(inst, net, nb) - rebate;
}

inline BudgetReport dist_budget_report(const Instance& inst, const TreeNetwork& net,
                                       const DistMessageProfile& m) {
  BudgetReport r;
  for (int i = 0; i < inst.n_users(); ++i) {
    const Neighborhood nb = extract_neighborhood(net, m, i);
    r.taxes += tax_dist(inst, net, nb);
    r.rebated_taxes += dist_rebate_tax(inst, net, nb);
  }
  r.community_cost = community_cost(inst, allocate_dist(m));
  r.gross = r.taxes - r.community_cost;
  r.rebated = r.rebated_taxes - r.community_cost;
  return r;
}

inline std::vector<IrEntry> dist_check_ir(const Instance& inst, const TreeNetwork& net,
                                          const DistMessageProfile& m, double tol = 1e-9) {
  return ir_entries(
      inst, [&](int i) { return payoff_dist(inst, net, extract_neighborhood(net, m, i)); },
      tol);
}

}  // namespace ecm
