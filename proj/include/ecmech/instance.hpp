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
#include "ecmech/utility.hpp"

namespace ecm {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Demands, one row per user and one column per time slot.
using DemandMatrix = Eigen::MatrixXd;

/// One nonzero a^{i,l}_t of a constraint row (0-based user and slot).
struct ConstraintCoeff {
  int user = 0;
  int slot = 0;
  double value = 0.0;
};

/// sum over coeffs of value * x[user][slot] <= rhs
struct ConstraintRow {
  std::vector<ConstraintCoeff> coeffs;
  double rhs = 0.0;
};

/// Declarative description of a community, validated by build_instance.
/// Utilities are listed user-major: entry i * horizon + t.
struct InstanceSpec {
  int n_users = 0;
  int horizon = 0;
  std::vector<UtilityFunction> utilities;
  std::vector<double> unit_prices;
  double peak_price = 0.0;
  std::vector<ConstraintRow> rows;
};

/// A validated, immutable demand-management problem.
///
/// Column (i, t) of the constraint matrix lives at flat index i * T + t.
class Instance {
 public:
  int n_users() const { return n_users_; }
  int horizon() const { return horizon_; }
  int n_constraints() const { return static_cast<int>(b_.size()); }
  int n_flat() const { return n_users_ * horizon_; }

  int flat(int user, int slot) const { return user * horizon_ + slot; }

  const UtilityFunction& utility(int user, int slot) const {
    return utilities_[static_cast<std::size_t>(flat(user, slot))];
  }
  const std::vector<UtilityFunction>& utilities() const { return utilities_; }

  double unit_price(int slot) const { return p_(slot); }
  const Vector& unit_prices() const { return p_; }
  double peak_price() const { return p0_; }

  const Matrix& A() const { return A_; }
  const Vector& b() const { return b_; }
  double coeff(int user, int row, int slot) const {
    return A_(row, flat(user, slot));
  }

  /// Rows with a nonzero coefficient in the user's column block, ascending.
  const std::vector<int>& user_constraints(int user) const {
    return user_rows_[static_cast<std::size_t>(user)];
  }
  bool touches(int user, int row) const {
    const auto& rows = user_constraints(user);
    return std::binary_search(rows.begin(), rows.end(), row);
  }

  /// a^{i,l} . y for one user's demand vector.
  double row_dot_user(int row, int user, const Eigen::Ref<const Vector>& y) const {
    return A_.row(row).segment(flat(user, 0), horizon_).dot(y);
  }

  Vector flatten(const DemandMatrix& x) const {
    Vector out(n_flat());
    for (int i = 0; i < n_users_; ++i) {
      for (int t = 0; t < horizon_; ++t) {
        out(flat(i, t)) = x(i, t);
      }
    }
    return out;
  }

  DemandMatrix unflatten(const Vector& v) const {
    DemandMatrix x(n_users_, horizon_);
    for (int i = 0; i < n_users_; ++i) {
      for (int t = 0; t < horizon_; ++t) {
        x(i, t) = v(flat(i, t));
      }
    }
    return x;
  }

  void require_shape(const DemandMatrix& x) const {
    if (x.rows() != n_users_ || x.cols() != horizon_) {
      std::ostringstream os;
      os << "demand matrix is " << x.rows() << "x" << x.cols() << ", expected "
         << n_users_ << "x" << horizon_;
      throw DimensionMismatch(os.str());
    }
  }

 private:
  friend Instance build_instance(const InstanceSpec& spec);
  Instance() = default;

  int n_users_ = 0;
  int horizon_ = 0;
  std::vector<UtilityFunction> utilities_;
  Vector p_;
  double p0_ = 0.0;
  Matrix A_;
  Vector b_;
  std::vector<std::vector<int>> user_rows_;
};

inline Instance build_instance(const InstanceSpec& spec) {
  if (spec.n_users < 1 || spec.horizon < 1) {
    throw DimensionMismatch("need at least one user and one time slot");
  }
  const int n = spec.n_users;
  const int T = spec.horizon;
  if (static_cast<int>(spec.utilities.size()) != n * T) {
    std::ostringstream os;
    os << "expected " << n * T << " utilities, got " << spec.utilities.size();
    throw DimensionMismatch(os.str());
  }
  if (static_cast<int>(spec.unit_prices.size()) != T) {
    std::ostringstream os;
    os << "expected " << T << " unit prices, got " << spec.unit_prices.size();
    throw DimensionMismatch(os.str());
  }
  if (!std::isfinite(spec.peak_price) || spec.peak_price < 0.0) {
    throw ScenarioError("peak price must be finite and nonnegative");
  }

  Instance inst;
  inst.n_users_ = n;
  inst.horizon_ = T;
  inst.utilities_ = spec.utilities;
  inst.p_ = Eigen::Map<const Vector>(spec.unit_prices.data(), T);
  inst.p0_ = spec.peak_price;

  const int L = static_cast<int>(spec.rows.size());
  inst.A_ = Matrix::Zero(L, n * T);
  inst.b_ = Vector::Zero(L);
  for (int l = 0; l < L; ++l) {
    const auto& row = spec.rows[static_cast<std::size_t>(l)];
    if (!std::isfinite(row.rhs)) {
      throw ScenarioError("constraint rhs must be finite");
    }
    if (row.rhs < 0.0) {
      std::ostringstream os;
      os << "constraint row " << l + 1 << " has negative rhs " << row.rhs;
      throw NegativeRhs(os.str());
    }
    inst.b_(l) = row.rhs;
    for (const auto& c : row.coeffs) {
      if (c.user < 0 || c.user >= n || c.slot < 0 || c.slot >= T) {
        std::ostringstream os;
        os << "constraint row " << l + 1 << " references user " << c.user + 1
           << ", slot " << c.slot + 1 << " outside " << n << "x" << T;
        throw DimensionMismatch(os.str());
      }
      if (!std::isfinite(c.value)) {
        throw ScenarioError("constraint coefficient must be finite");
      }
      inst.A_(l, c.user * T + c.slot) += c.value;
    }
  }

  inst.user_rows_.assign(static_cast<std::size_t>(n), {});
  for (int i = 0; i < n; ++i) {
    for (int l = 0; l < L; ++l) {
      if ((inst.A_.row(l).segment(i * T, T).array() != 0.0).any()) {
        inst.user_rows_[static_cast<std::size_t>(i)].push_back(l);
      }
    }
  }
  return inst;
}

/// Community energy bill: sum_t p_t * S_t + p0 * max_t S_t, S_t the total
/// demand in slot t.
inline double community_cost(const Instance& inst, const DemandMatrix& x) {
  inst.require_shape(x);
  const Vector totals = x.colwise().sum().transpose();
  return inst.unit_prices().dot(totals) + inst.peak_price() * totals.maxCoeff();
}

inline double total_utility(const Instance& inst, const DemandMatrix& x) {
  inst.require_shape(x);
  double sum = 0.0;
  for (int i = 0; i < inst.n_users(); ++i) {
    for (int t = 0; t < inst.horizon(); ++t) {
      sum += inst.utility(i, t).value(x(i, t));
    }
  }
  return sum;
}

inline double user_utility(const Instance& inst, int user,
                           const Eigen::Ref<const Vector>& y) {
  double sum = 0.0;
  for (int t = 0; t < inst.horizon(); ++t) {
    sum += inst.utility(user, t).value(y(t));
  }
  return sum;
}

inline double social_welfare(const Instance& inst, const DemandMatrix& x) {
  return total_utility(inst, x) - community_cost(inst, x);
}

/// Largest violation max(0, a^l x - b^l) over all rows.
inline double constraint_violation(const Instance& inst, const DemandMatrix& x) {
  inst.require_shape(x);
  if (inst.n_constraints() == 0) return 0.0;
  const Vector slack = inst.A() * inst.flatten(x) - inst.b();
  return std::max(0.0, slack.maxCoeff());
}

inline bool is_feasible(const Instance& inst, const DemandMatrix& x,
                        double tol = 1e-12) {
  return constraint_violation(inst, x) <= tol;
}

struct ZeroingCounterexample {
  DemandMatrix point;
  int user = 0;
  int slot = 0;
};

/// Zeroes each coordinate of a feasible point in turn and returns the first
/// coordinate whose zeroing leaves the polytope.
inline std::optional<ZeroingCounterexample> coordinate_zeroing_counterexample(
    const Instance& inst, const DemandMatrix& x, double tol = 1e-12) {
  for (int i = 0; i < inst.n_users(); ++i) {
    for (int t = 0; t < inst.horizon(); ++t) {
      DemandMatrix z = x;
      z(i, t) = 0.0;
      if (!is_feasible(inst, z, tol)) return ZeroingCounterexample{x, i, t};
    }
  }
  return std::nullopt;
}

struct CoordinateConvexityReport {
  int samples_requested = 0;
  int feasible_points = 0;
  std::int64_t draws = 0;
  std::uint64_t seed = 0;
  std::optional<ZeroingCounterexample> counterexample;
  bool pass() const { return !counterexample.has_value(); }
};

/// Rejection-samples feasible points from the utility-domain box and checks
/// that zeroing any single coordinate keeps each point feasible.
inline CoordinateConvexityReport check_coordinate_convexity(
    const Instance& inst, int samples, std::uint64_t seed = 0,
    std::int64_t max_draws_per_sample = 10000) {
  if (samples < 1) throw ScenarioError("samples must be at least 1");
  CoordinateConvexityReport report;
  report.samples_requested = samples;
  report.seed = seed;

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::int64_t budget = max_draws_per_sample * samples;
  DemandMatrix x(inst.n_users(), inst.horizon());
  while (report.feasible_points < samples && report.draws < budget) {
    ++report.draws;
    for (int i = 0; i < inst.n_users(); ++i) {
      for (int t = 0; t < inst.horizon(); ++t) {
        const auto& u = inst.utility(i, t);
        x(i, t) = u.domain_lo() + unit(rng) * (u.domain_hi() - u.domain_lo());
      }
    }
    if (!is_feasible(inst, x)) continue;
    ++report.feasible_points;
    if (auto cx = coordinate_zeroing_counterexample(inst, x)) {
      report.counterexample = std::move(cx);
      return report;
    }
  }
  if (report.feasible_points == 0) {
    std::ostringstream os;
    os << "no feasible point found in " << report.draws << " draws";
    throw SamplingFailed(os.str());
  }
  return report;
}

}  // namespace ecm
