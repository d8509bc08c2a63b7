#pragma once

#include <Eigen/Dense>

#include <sstream>

#include "ecmech/error.hpp"
#include "ecmech/instance.hpp"

namespace ecm {

/// Messages of the centralized mechanism, one row per user:
/// y (N x T) demands, q (N x L) constraint prices, s (N x T) peak prices,
/// beta (N x T) predictions of the next user's demand.
struct CentralMessageProfile {
  DemandMatrix y;
  Matrix q;
  Matrix s;
  Matrix beta;

  int n_users() const { return static_cast<int>(y.rows()); }

  static CentralMessageProfile zeros(const Instance& inst) {
    const int N = inst.n_users();
    const int T = inst.horizon();
    return {Matrix::Zero(N, T), Matrix::Zero(N, inst.n_constraints()),
            Matrix::Zero(N, T), Matrix::Zero(N, T)};
  }
};

/// Throws DimensionMismatch on wrong shapes and ScenarioError when a price
/// message is negative.
inline void validate_profile(const Instance& inst, const CentralMessageProfile& m) {
  const int N = inst.n_users();
  const int T = inst.horizon();
  const int L = inst.n_constraints();
  auto need = [](const Matrix& M, int r, int c, const char* name) {
    if (M.rows() != r || M.cols() != c) {
      std::ostringstream os;
      os << name << " is " << M.rows() << "x" << M.cols() << ", expected " << r
         << "x" << c;
      throw DimensionMismatch(os.str());
    }
  };
  need(m.y, N, T, "y");
  need(m.q, N, L, "q");
  need(m.s, N, T, "s");
  need(m.beta, N, T, "beta");
  if ((L > 0 && m.q.minCoeff() < 0.0) || m.s.minCoeff() < 0.0) {
    throw ScenarioError("price messages q and s must be nonnegative");
  }
  if (!m.y.allFinite() || !m.q.allFinite() || !m.s.allFinite() ||
      !m.beta.allFinite()) {
    throw ScenarioError("messages must be finite");
  }
}

/// Index of the user whose demand user i predicts (i + 1 mod N) and of the
/// user predicting i's demand (i - 1 mod N).
inline int next_user(int i, int n) { return (i + 1) % n; }
inline int prev_user(int i, int n) { return (i + n - 1) % n; }

}  // namespace ecm
