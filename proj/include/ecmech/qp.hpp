#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include "ecmech/error.hpp"

namespace ecm {

struct ProjectionResult {
  Eigen::VectorXd point;
  Eigen::VectorXd eq_multipliers;    // free sign
  Eigen::VectorXd ineq_multipliers;  // >= 0
  std::vector<int> active_set;       // inequality rows held at equality
  int iterations = 0;
  double kkt_residual = 0.0;
};

struct ProjectionKkt {
  double stationarity = 0.0;
  double primal = 0.0;
  double dual = 0.0;
  double complementarity = 0.0;
  double max() const {
    return std::max({stationarity, primal, dual, complementarity});
  }
};

/// KKT residuals of a candidate projection. The Lagrangian is
/// 1/2 |z - c|^2 - nu'(E z - e) - u'(C z - d).
inline ProjectionKkt projection_kkt(const Eigen::VectorXd& c,
                                    const Eigen::MatrixXd& E,
                                    const Eigen::VectorXd& e,
                                    const Eigen::MatrixXd& C,
                                    const Eigen::VectorXd& d,
                                    const ProjectionResult& r) {
  ProjectionKkt k;
  Eigen::VectorXd grad = r.point - c;
  if (E.rows() > 0) grad -= E.transpose() * r.eq_multipliers;
  if (C.rows() > 0) grad -= C.transpose() * r.ineq_multipliers;
  k.stationarity = grad.lpNorm<Eigen::Infinity>();
  if (E.rows() > 0) {
    k.primal = (E * r.point - e).lpNorm<Eigen::Infinity>();
  }
  if (C.rows() > 0) {
    const Eigen::VectorXd s = C * r.point - d;
    k.primal = std::max(k.primal, std::max(0.0, -s.minCoeff()));
    k.dual = std::max(0.0, -r.ineq_multipliers.minCoeff());
    k.complementarity =
        (r.ineq_multipliers.array() * s.array()).abs().maxCoeff();
  }
  return k;
}

namespace detail {

// Rotates columns (a, b) of J so that (d[a], d[b]) becomes (h, 0).
inline void givens_columns(Eigen::MatrixXd& J, Eigen::VectorXd& d, int a,
                           int b) {
  const double h = std::hypot(d(a), d(b));
  if (h == 0.0) return;
  const double cs = d(a) / h;
  const double sn = d(b) / h;
  d(a) = h;
  d(b) = 0.0;
  for (int k = 0; k < J.rows(); ++k) {
    const double ja = J(k, a);
    const double jb = J(k, b);
    J(k, a) = cs * ja + sn * jb;
    J(k, b) = -sn * ja + cs * jb;
  }
}

}  // namespace detail

/// Euclidean projection of `c` onto {z : E z = e, C z >= d} by the dual
/// active-set method of Goldfarb and Idnani, specialised to an identity
/// Hessian. No feasible starting point is needed: the method starts from the
/// unconstrained minimiser c and adds violated constraints one at a time.
///
/// Throws Infeasible when the polyhedron is empty and MaxActiveSetIters when
/// the iteration cap is reached.
inline ProjectionResult project_onto_polyhedron(const Eigen::VectorXd& c,
                                                const Eigen::MatrixXd& E,
                                                const Eigen::VectorXd& e,
                                                const Eigen::MatrixXd& C,
                                                const Eigen::VectorXd& d,
                                                int max_iters = 0) {
  const int n = static_cast<int>(c.size());
  const int meq = static_cast<int>(E.rows());
  const int mineq = static_cast<int>(C.rows());
  const int m = meq + mineq;
  if ((meq > 0 && E.cols() != n) || (mineq > 0 && C.cols() != n) ||
      e.size() != meq || d.size() != mineq) {
    throw DimensionMismatch("projection constraint dimensions do not match");
  }
  if (max_iters <= 0) max_iters = 50 * (m + n) + 100;
  constexpr double kEps = std::numeric_limits<double>::epsilon();

  // Constraint k: rows of E for k < meq, rows of C afterwards.
  auto normal = [&](int k) -> Eigen::VectorXd {
    return k < meq ? Eigen::VectorXd(E.row(k).transpose())
                   : Eigen::VectorXd(C.row(k - meq).transpose());
  };
  auto rhs = [&](int k) { return k < meq ? e(k) : d(k - meq); };
  auto slack = [&](int k, const Eigen::VectorXd& z) {
    return normal(k).dot(z) - rhs(k);
  };
  auto violation_tol = [&](int k, const Eigen::VectorXd& z) {
    return 1e-13 * std::max({1.0, std::abs(rhs(k)), normal(k).norm() * z.norm()});
  };

  Eigen::VectorXd x = c;
  Eigen::MatrixXd J = Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd R = Eigen::MatrixXd::Zero(n, n);
  std::vector<int> active;  // constraint ids, equalities first
  std::vector<double> u;    // multipliers of `active`
  int iq = 0;
  double r_norm = 1.0;

  Eigen::VectorXd dvec(n), z(n), rdir(n);

  auto compute_step = [&](const Eigen::VectorXd& np) {
    dvec = J.transpose() * np;
    z = J.rightCols(n - iq) * dvec.tail(n - iq);
    for (int i = iq - 1; i >= 0; --i) {
      double sum = dvec(i);
      for (int j = i + 1; j < iq; ++j) sum -= R(i, j) * rdir(j);
      rdir(i) = sum / R(i, i);
    }
  };

  auto add_constraint = [&]() -> bool {
    for (int j = n - 1; j >= iq + 1; --j) detail::givens_columns(J, dvec, j - 1, j);
    ++iq;
    R.col(iq - 1).head(iq) = dvec.head(iq);
    r_norm = std::max(r_norm, std::abs(dvec(iq - 1)));
    return std::abs(dvec(iq - 1)) > kEps * r_norm * 100.0;
  };

  auto drop_constraint = [&](int pos) {
    for (int col = pos; col < iq - 1; ++col) R.col(col) = R.col(col + 1);
    R.col(iq - 1).setZero();
    active.erase(active.begin() + pos);
    u.erase(u.begin() + pos);
    --iq;
    for (int j = pos; j < iq; ++j) {
      const double a = R(j, j);
      const double b = R(j + 1, j);
      const double h = std::hypot(a, b);
      if (h == 0.0) continue;
      const double cs = a / h;
      const double sn = b / h;
      for (int col = j; col < iq; ++col) {
        const double ra = R(j, col);
        const double rb = R(j + 1, col);
        R(j, col) = cs * ra + sn * rb;
        R(j + 1, col) = -sn * ra + cs * rb;
      }
      R(j + 1, j) = 0.0;
      for (int k = 0; k < n; ++k) {
        const double ja = J(k, j);
        const double jb = J(k, j + 1);
        J(k, j) = cs * ja + sn * jb;
        J(k, j + 1) = -sn * ja + cs * jb;
      }
    }
  };

  int iterations = 0;

  // Equalities: take a full step onto each hyperplane and keep it active.
  for (int k = 0; k < meq; ++k) {
    ++iterations;
    const Eigen::VectorXd np = normal(k);
    compute_step(np);
    const double zn = z.dot(np);
    if (std::abs(zn) <= kEps * 100.0 * std::max(1.0, np.squaredNorm())) {
      // Dependent on earlier equalities: consistent only if already satisfied.
      if (std::abs(slack(k, x)) > 1e-10 * std::max(1.0, std::abs(rhs(k)))) {
        throw Infeasible("equality constraints are inconsistent");
      }
      continue;
    }
    const double t = -slack(k, x) / zn;
    x += t * z;
    for (int i = 0; i < iq; ++i) u[static_cast<std::size_t>(i)] -= t * rdir(i);
    active.push_back(k);
    u.push_back(t);
    if (!add_constraint()) {
      throw NumericalFailure("equality constraint became dependent");
    }
  }
  const int n_eq_active = iq;

  while (true) {
    // Most violated inequality.
    int p = -1;
    double worst = 0.0;
    for (int k = meq; k < m; ++k) {
      if (std::find(active.begin(), active.end(), k) != active.end()) continue;
      const double s = slack(k, x);
      if (s < -violation_tol(k, x) && s < worst) {
        worst = s;
        p = k;
      }
    }
    if (p < 0) break;

    const Eigen::VectorXd np = normal(p);
    double u_new = 0.0;
    while (true) {
      if (++iterations > max_iters) {
        std::ostringstream os;
        os << "active-set projection did not terminate in " << max_iters
           << " iterations";
        throw MaxActiveSetIters(os.str());
      }
      compute_step(np);

      // Partial (dual) step: first active inequality multiplier to hit zero.
      double t1 = std::numeric_limits<double>::infinity();
      int block = -1;
      for (int i = n_eq_active; i < iq; ++i) {
        if (rdir(i) > 0.0) {
          const double ratio = u[static_cast<std::size_t>(i)] / rdir(i);
          if (ratio < t1) {
            t1 = ratio;
            block = i;
          }
        }
      }
      // Full (primal) step onto constraint p.
      double t2 = std::numeric_limits<double>::infinity();
      const double zn = z.dot(np);
      if (z.lpNorm<Eigen::Infinity>() > kEps * 100.0 * np.norm() && zn > 0.0) {
        t2 = -slack(p, x) / zn;
      }
      const double t = std::min(t1, t2);
      if (!std::isfinite(t)) {
        throw Infeasible("price polytope is empty");
      }

      for (int i = 0; i < iq; ++i) u[static_cast<std::size_t>(i)] -= t * rdir(i);
      u_new += t;
      if (std::isfinite(t2)) x += t * z;

      if (t2 <= t1) {
        active.push_back(p);
        u.push_back(u_new);
        if (!add_constraint()) {
          // Numerically dependent; the constraint is satisfied after the step.
          active.pop_back();
          u.pop_back();
          --iq;
          R.col(iq).setZero();
        }
        break;
      }
      drop_constraint(block);
    }
  }

  ProjectionResult out;
  out.point = x;
  out.eq_multipliers = Eigen::VectorXd::Zero(meq);
  out.ineq_multipliers = Eigen::VectorXd::Zero(mineq);
  for (std::size_t i = 0; i < active.size(); ++i) {
    const int k = active[i];
    if (k < meq) {
      out.eq_multipliers(k) = u[i];
    } else {
      out.ineq_multipliers(k - meq) = std::max(0.0, u[i]);
      out.active_set.push_back(k - meq);
    }
  }
  std::sort(out.active_set.begin(), out.active_set.end());
  out.iterations = iterations;
  out.kkt_residual = projection_kkt(c, E, e, C, d, out).max();
  return out;
}

}  // namespace ecm
