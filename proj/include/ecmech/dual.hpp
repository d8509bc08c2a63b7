#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "ecmech/error.hpp"
#include "ecmech/instance.hpp"
#include "ecmech/price_set.hpp"

namespace ecm {

class BoundViolation : public Error {
 public:
  BoundViolation(const std::string& what, DemandMatrix witness, int user,
                 int slot)
      : Error(what), witness_(std::move(witness)), user_(user), slot_(slot) {}
  const DemandMatrix& witness() const { return witness_; }
  int user() const { return user_; }
  int slot() const { return slot_; }

 private:
  DemandMatrix witness_;
  int user_;
  int slot_;
};

/// Marginal price faced by each (user, slot): p_t + sum_l a^{i,l}_t lambda^l +
/// mu_t, laid out N x T. `prices` is (lambda, mu).
inline DemandMatrix marginal_prices(const Instance& inst, const Vector& prices) {
  const int L = inst.n_constraints();
  const int T = inst.horizon();
  if (prices.size() != L + T) {
    throw DimensionMismatch("price vector must have length L + T");
  }
  DemandMatrix out(inst.n_users(), T);
  const Vector lam = prices.head(L);
  Vector a_lam = Vector::Zero(inst.n_flat());
  if (L > 0) a_lam = inst.A().transpose() * lam;
  for (int i = 0; i < inst.n_users(); ++i) {
    for (int t = 0; t < T; ++t) {
      out(i, t) = inst.unit_price(t) + a_lam(inst.flat(i, t)) + prices(L + t);
    }
  }
  return out;
}

/// Demand maximizing v^i_t(x) - price * x in every coordinate.
inline DemandMatrix demand_response(const Instance& inst, const Vector& prices) {
  const DemandMatrix pr = marginal_prices(inst, prices);
  DemandMatrix x(inst.n_users(), inst.horizon());
  for (int i = 0; i < inst.n_users(); ++i) {
    for (int t = 0; t < inst.horizon(); ++t) {
      x(i, t) = inst.utility(i, t).inverse_derivative(pr(i, t));
    }
  }
  return x;
}

/// Gradient (b - A x, -sum_i x_t) of the dual function, which is minimized,
/// at the demand response x.
inline Vector dual_gradient(const Instance& inst, const DemandMatrix& x) {
  inst.require_shape(x);
  const int L = inst.n_constraints();
  const int T = inst.horizon();
  Vector g(L + T);
  if (L > 0) g.head(L) = inst.b() - inst.A() * inst.flatten(x);
  g.tail(T) = -x.colwise().sum().transpose();
  return g;
}

/// D(lambda, mu) = b' lambda + sum_{i,t} [v(x) - price_{it} x] at the
/// maximizing x. Peak price p0 enters through the constraint sum mu = p0.
inline double dual_value(const Instance& inst, const Vector& prices) {
  const DemandMatrix pr = marginal_prices(inst, prices);
  const int L = inst.n_constraints();
  double d = L > 0 ? inst.b().dot(prices.head(L)) : 0.0;
  for (int i = 0; i < inst.n_users(); ++i) {
    for (int t = 0; t < inst.horizon(); ++t) {
      const auto& u = inst.utility(i, t);
      const double x = u.inverse_derivative(pr(i, t));
      d += u.value(x) - pr(i, t) * x;
    }
  }
  return d;
}

/// Coordinate-wise minimum of inf(-v'') over each utility's domain.
inline double strong_concavity_parameter(const Instance& inst) {
  double delta = std::numeric_limits<double>::infinity();
  for (const auto& u : inst.utilities()) delta = std::min(delta, u.min_curvature());
  if (!(delta > 0.0) || !std::isfinite(delta)) {
    throw NotStronglyConcave("curvature infimum is not positive");
  }
  return delta;
}

/// Largest singular value by power iteration on M' M.
inline double spectral_norm(const Matrix& M, double tol = 1e-10,
                            int max_iters = 100000) {
  if (M.size() == 0) return 0.0;
  const Matrix G = M.transpose() * M;
  Vector v = Vector::Ones(G.cols()) / std::sqrt(static_cast<double>(G.cols()));
  double lambda = 0.0;
  for (int k = 0; k < max_iters; ++k) {
    Vector w = G * v;
    const double nw = w.norm();
    if (nw == 0.0) return 0.0;
    w /= nw;
    const double next = w.dot(G * w);
    v = w;
    if (std::abs(next - lambda) <= tol * std::max(1.0, next)) {
      lambda = next;
      break;
    }
    lambda = next;
  }
  return std::sqrt(std::max(0.0, lambda));
}

struct DerivativeBoundsReport {
  int samples_requested = 0;
  int points_checked = 0;
  std::uint64_t seed = 0;
};

/// Checks that the bounds hold at every sampled feasible demand (the origin,
/// random points of the domain box, and the polytope boundary along each
/// coordinate axis through them), and that inverting the marginal utility at
/// both bounds stays inside the utility domain.
///
/// Throws BoundViolation with the first offending point.
inline DerivativeBoundsReport validate_derivative_bounds(
    const Instance& inst, const DerivativeBounds& bounds, int samples,
    std::uint64_t seed = 0) {
  const int N = inst.n_users();
  const int T = inst.horizon();
  if (bounds.lower.rows() != N || bounds.lower.cols() != T ||
      bounds.upper.rows() != N || bounds.upper.cols() != T) {
    throw DimensionMismatch("derivative bounds must be N x T");
  }
  if (!bounds.lower.allFinite() || !bounds.upper.allFinite()) {
    throw ScenarioError("derivative bounds must be finite");
  }
  if (samples < 1) throw ScenarioError("samples must be at least 1");

  DerivativeBoundsReport report;
  report.samples_requested = samples;
  report.seed = seed;

  for (int i = 0; i < N; ++i) {
    for (int t = 0; t < T; ++t) {
      const auto& u = inst.utility(i, t);
      for (const double r : {bounds.lower(i, t), bounds.upper(i, t)}) {
        try {
          (void)u.inverse_derivative(r);
        } catch (const OutOfDomain&) {
          std::ostringstream os;
          os << "marginal utility bound " << r << " for user " << i + 1
             << ", slot " << t + 1 << " has no preimage in the domain";
          throw BoundViolation(os.str(), DemandMatrix::Zero(N, T), i, t);
        }
      }
    }
  }

  auto check_point = [&](const DemandMatrix& x) {
    ++report.points_checked;
    for (int i = 0; i < N; ++i) {
      for (int t = 0; t < T; ++t) {
        const auto& u = inst.utility(i, t);
        if (!u.contains(x(i, t))) continue;
        const double v = u.derivative(x(i, t));
        const double lo = bounds.lower(i, t);
        const double hi = bounds.upper(i, t);
        const double slack = 1e-12 * std::max(1.0, std::abs(v));
        if (v < lo - slack || v > hi + slack) {
          std::ostringstream os;
          os << "marginal utility " << v << " of user " << i + 1 << ", slot "
             << t + 1 << " at demand " << x(i, t) << " is outside [" << lo
             << ", " << hi << "]";
          throw BoundViolation(os.str(), x, i, t);
        }
      }
    }
  };

  // Largest step along +/- e_k from a feasible x that stays feasible and in
  // the domain box.
  auto boundary_along = [&](const DemandMatrix& x, int i, int t, double dir) {
    const auto& u = inst.utility(i, t);
    double step = dir > 0 ? u.domain_hi() - x(i, t) : x(i, t) - u.domain_lo();
    const int k = inst.flat(i, t);
    for (int l = 0; l < inst.n_constraints(); ++l) {
      const double a = dir * inst.A()(l, k);
      if (a <= 0.0) continue;
      const double slack = inst.b()(l) - inst.A().row(l).dot(inst.flatten(x));
      step = std::min(step, std::max(0.0, slack) / a);
    }
    DemandMatrix y = x;
    y(i, t) += dir * std::max(0.0, step);
    return y;
  };

  auto check_with_rays = [&](const DemandMatrix& x) {
    check_point(x);
    for (int i = 0; i < N; ++i) {
      for (int t = 0; t < T; ++t) {
        check_point(boundary_along(x, i, t, +1.0));
        check_point(boundary_along(x, i, t, -1.0));
      }
    }
  };

  DemandMatrix origin = DemandMatrix::Zero(N, T);
  bool origin_in_box = true;
  for (int i = 0; i < N; ++i) {
    for (int t = 0; t < T; ++t) origin_in_box &= inst.utility(i, t).contains(0.0);
  }
  if (origin_in_box && is_feasible(inst, origin)) check_with_rays(origin);

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::int64_t budget = 10000LL * samples;
  std::int64_t draws = 0;
  int found = 0;
  DemandMatrix x(N, T);
  while (found < samples && draws < budget) {
    ++draws;
    for (int i = 0; i < N; ++i) {
      for (int t = 0; t < T; ++t) {
        const auto& u = inst.utility(i, t);
        x(i, t) = u.domain_lo() + unit(rng) * (u.domain_hi() - u.domain_lo());
      }
    }
    if (!is_feasible(inst, x)) continue;
    ++found;
    check_with_rays(x);
  }
  return report;
}

}  // namespace ecm
