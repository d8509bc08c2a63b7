#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <utility>

#include "ecmech/error.hpp"
#include "ecmech/instance.hpp"
#include "ecmech/qp.hpp"

namespace ecm {

/// Per-(user, slot) bounds on marginal utility, N x T each.
struct DerivativeBounds {
  Matrix lower;
  Matrix upper;
};

/// Bounds implied by the utility domains: v'(domain_hi) and v'(domain_lo).
inline DerivativeBounds domain_derivative_bounds(const Instance& inst) {
  DerivativeBounds r{Matrix(inst.n_users(), inst.horizon()),
                     Matrix(inst.n_users(), inst.horizon())};
  for (int i = 0; i < inst.n_users(); ++i) {
    for (int t = 0; t < inst.horizon(); ++t) {
      r.lower(i, t) = inst.utility(i, t).min_derivative();
      r.upper(i, t) = inst.utility(i, t).max_derivative();
    }
  }
  return r;
}

/// A over the slot-summing block 1' (x) I_T: (L + T) x NT.
inline Matrix stacked_constraint_matrix(const Instance& inst) {
  const int L = inst.n_constraints();
  const int T = inst.horizon();
  Matrix At = Matrix::Zero(L + T, inst.n_flat());
  if (L > 0) At.topRows(L) = inst.A();
  for (int i = 0; i < inst.n_users(); ++i) {
    for (int t = 0; t < T; ++t) At(L + t, inst.flat(i, t)) = 1.0;
  }
  return At;
}

/// The polytope of proper prices (lambda, mu):
///   (lambda, mu) >= 0,  r_lo <= A_tilde' (lambda, mu) + p_tilde <= r_hi,
///   sum_t mu_t = p0.
class PriceSet {
 public:
  int n_constraints() const { return L_; }
  int horizon() const { return T_; }
  int dim() const { return L_ + T_; }
  double peak_price() const { return p0_; }

  const Matrix& A_tilde() const { return A_tilde_; }
  const Vector& p_tilde() const { return p_tilde_; }
  const Vector& r_lo() const { return r_lo_; }
  const Vector& r_hi() const { return r_hi_; }

  /// Largest violation of any defining (in)equality.
  double violation(const Vector& prices) const {
    require_dim(prices);
    double v = std::max(0.0, -prices.minCoeff());
    const Vector marg = A_tilde_.transpose() * prices + p_tilde_;
    v = std::max(v, (r_lo_ - marg).maxCoeff());
    v = std::max(v, (marg - r_hi_).maxCoeff());
    v = std::max(v, std::abs(prices.tail(T_).sum() - p0_));
    return v;
  }

  bool contains(const Vector& prices, double tol = 1e-9) const {
    return violation(prices) <= tol;
  }

  /// Euclidean projection; the projection's own KKT system is checked to
  /// 1e-10 (relative to the size of the input) before returning.
  ProjectionResult project_detailed(const Vector& point) const {
    require_dim(point);
    ProjectionResult r = project_onto_polyhedron(point, E_, e_, C_, d_);
    const double scale = std::max(1.0, point.lpNorm<Eigen::Infinity>());
    if (!(r.kkt_residual <= 1e-10 * scale)) {
      std::ostringstream os;
      os << "projection KKT residual " << r.kkt_residual << " exceeds 1e-10";
      throw NumericalFailure(os.str());
    }
    return r;
  }

  /// Projection with round-off below zero removed from the price entries.
  Vector project(const Vector& point) const {
    return project_detailed(point).point.cwiseMax(0.0);
  }

  /// Inequality description C z >= d and equality E z = e used by project().
  const Matrix& ineq_matrix() const { return C_; }
  const Vector& ineq_rhs() const { return d_; }
  const Matrix& eq_matrix() const { return E_; }
  const Vector& eq_rhs() const { return e_; }

 private:
  friend PriceSet make_price_set(const Instance&, const DerivativeBounds&);
  PriceSet() = default;

  void require_dim(const Vector& v) const {
    if (v.size() != dim()) {
      std::ostringstream os;
      os << "price vector has length " << v.size() << ", expected " << dim();
      throw DimensionMismatch(os.str());
    }
  }

  int L_ = 0;
  int T_ = 0;
  double p0_ = 0.0;
  Matrix A_tilde_;
  Vector p_tilde_;
  Vector r_lo_;
  Vector r_hi_;
  Matrix C_;
  Vector d_;
  Matrix E_;
  Vector e_;
};

/// Builds the price set and checks it is nonempty by projecting the origin.
inline PriceSet make_price_set(const Instance& inst,
                               const DerivativeBounds& bounds) {
  const int N = inst.n_users();
  const int T = inst.horizon();
  if (bounds.lower.rows() != N || bounds.lower.cols() != T ||
      bounds.upper.rows() != N || bounds.upper.cols() != T) {
    throw DimensionMismatch("derivative bounds must be N x T");
  }
  if (!bounds.lower.allFinite() || !bounds.upper.allFinite()) {
    throw ScenarioError("derivative bounds must be finite");
  }

  PriceSet P;
  P.L_ = inst.n_constraints();
  P.T_ = T;
  P.p0_ = inst.peak_price();
  P.A_tilde_ = stacked_constraint_matrix(inst);
  P.p_tilde_ = Vector(inst.n_flat());
  for (int i = 0; i < N; ++i) {
    for (int t = 0; t < T; ++t) P.p_tilde_(inst.flat(i, t)) = inst.unit_price(t);
  }
  P.r_lo_ = inst.flatten(bounds.lower);
  P.r_hi_ = inst.flatten(bounds.upper);

  const int m = P.dim();
  const int nf = inst.n_flat();
  const Matrix At_T = P.A_tilde_.transpose();
  P.C_ = Matrix::Zero(m + 2 * nf, m);
  P.d_ = Vector::Zero(m + 2 * nf);
  P.C_.topRows(m).setIdentity();
  P.C_.middleRows(m, nf) = At_T;
  P.d_.segment(m, nf) = P.r_lo_ - P.p_tilde_;
  P.C_.bottomRows(nf) = -At_T;
  P.d_.tail(nf) = -(P.r_hi_ - P.p_tilde_);
  P.E_ = Matrix::Zero(1, m);
  P.E_.rightCols(T).setOnes();
  P.e_ = Vector::Constant(1, P.p0_);

  try {
    (void)P.project(Vector::Zero(m));
  } catch (const Infeasible&) {
    throw Infeasible("price set is empty for the given derivative bounds");
  }
  return P;
}

inline PriceSet make_price_set(const Instance& inst) {
  return make_price_set(inst, domain_derivative_bounds(inst));
}

}  // namespace ecm
