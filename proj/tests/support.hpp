#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "ecmech/ecmech.hpp"

namespace ecm::test {

#ifndef ECMECH_FIXTURE
#error "ECMECH_FIXTURE must point at the worked-example scenario"
#endif

inline const std::string kFixturePath = ECMECH_FIXTURE;

inline Scenario fixture_scenario() { return load_scenario(kFixturePath); }
inline Instance fixture_instance() { return fixture_scenario().instance(); }

/// Published optimum of the worked example (x user-major, 4 decimals).
inline DemandMatrix fixture_x() {
  DemandMatrix x(3, 2);
  x << -1.0000, -0.5246, -0.3410, 0.9508, 0.4885, 2.4263;
  return x;
}
inline double fixture_lambda7() { return (249.0 + std::sqrt(106201.0)) / 520.0; }
inline double fixture_lambda1() { return fixture_lambda7() + 0.1 - 1.0; }

/// The published solution with the closed-form multipliers.
inline CentralSolution fixture_solution() {
  CentralSolution s;
  s.x = fixture_x();
  s.w = 2.8525;
  s.lambda = Vector::Zero(7);
  s.lambda(0) = fixture_lambda1();
  s.lambda(6) = fixture_lambda7();
  s.mu = Vector(2);
  s.mu << 0.0, 0.05;
  return s;
}

/// Exact optimum given lambda7: x^i_t = i t / (p_t + lambda7 + mu_t) - 2
/// except x^1_1 = -1.
inline CentralSolution exact_fixture_solution() {
  CentralSolution s = fixture_solution();
  const double l7 = fixture_lambda7();
  const double p[2] = {0.1, 0.2};
  const double mu[2] = {0.0, 0.05};
  for (int i = 0; i < 3; ++i) {
    for (int t = 0; t < 2; ++t) {
      s.x(i, t) = (i + 1) * (t + 1) / (p[t] + l7 + mu[t]) - 2.0;
    }
  }
  s.x(0, 0) = -1.0;
  s.w = s.x.col(1).sum();
  return s;
}

/// Dykstra's alternating projections onto {E z = e} and each half-space
/// {c_k' z >= d_k}. Slow but independent of the active-set solver.
inline Vector dykstra_project(const Vector& c, const Matrix& E, const Vector& e,
                              const Matrix& C, const Vector& d, int max_cycles = 2000000,
                              double tol = 1e-14) {
  const int nsets = static_cast<int>(C.rows()) + 1;
  std::vector<Vector> incr(static_cast<std::size_t>(nsets), Vector::Zero(c.size()));
  Vector x = c;
  // Projection onto an affine subspace through the normal equations.
  const Eigen::LDLT<Matrix> EEt(E * E.transpose());
  for (int cycle = 0; cycle < max_cycles; ++cycle) {
    const Vector start = x;
    for (int k = 0; k < nsets; ++k) {
      Vector y = x + incr[static_cast<std::size_t>(k)];
      Vector p;
      if (k == 0) {
        p = y - E.transpose() * EEt.solve(E * y - e);
      } else {
        const Vector a = C.row(k - 1).transpose();
        const double s = a.dot(y) - d(k - 1);
        p = s >= 0.0 ? y : Vector(y - s / a.squaredNorm() * a);
      }
      incr[static_cast<std::size_t>(k)] = y - p;
      x = p;
    }
    // Small steps alone can stall short of the intersection.
    const double viol = std::max((E * x - e).lpNorm<Eigen::Infinity>(),
                                 C.rows() > 0 ? (d - C * x).maxCoeff() : 0.0);
    if ((x - start).lpNorm<Eigen::Infinity>() < tol && viol < 1e-12) break;
  }
  return x;
}

struct GridOptimum {
  DemandMatrix x;
  double value = -std::numeric_limits<double>::infinity();
};

/// Exhaustive maximisation of welfare for two users on the box given by
/// their utility domains, with grid step h. Each slot is tabulated by total
/// demand, after which the peak is enumerated.
inline GridOptimum grid_optimum(const Instance& inst, double h) {
  const int T = inst.horizon();
  GridOptimum out;
  out.x = DemandMatrix::Zero(2, T);
  // Per-user grids share the step, so totals live on a common lattice offset.
  std::vector<std::vector<double>> best(static_cast<std::size_t>(T));
  std::vector<std::vector<int>> arg(static_cast<std::size_t>(T));
  std::vector<double> origin(static_cast<std::size_t>(T));
  std::vector<int> n0(static_cast<std::size_t>(T)), n1(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) {
    const auto& u0 = inst.utility(0, t);
    const auto& u1 = inst.utility(1, t);
    const int a = static_cast<int>(std::floor((u0.domain_hi() - u0.domain_lo()) / h)) + 1;
    const int b = static_cast<int>(std::floor((u1.domain_hi() - u1.domain_lo()) / h)) + 1;
    n0[static_cast<std::size_t>(t)] = a;
    n1[static_cast<std::size_t>(t)] = b;
    std::vector<double> v0(static_cast<std::size_t>(a)), v1(static_cast<std::size_t>(b));
    for (int k = 0; k < a; ++k) v0[static_cast<std::size_t>(k)] = u0.value(u0.domain_lo() + k * h);
    for (int k = 0; k < b; ++k) v1[static_cast<std::size_t>(k)] = u1.value(u1.domain_lo() + k * h);
    auto& bt = best[static_cast<std::size_t>(t)];
    auto& at = arg[static_cast<std::size_t>(t)];
    bt.assign(static_cast<std::size_t>(a + b - 1), -std::numeric_limits<double>::infinity());
    at.assign(static_cast<std::size_t>(a + b - 1), 0);
    for (int k0 = 0; k0 < a; ++k0) {
      for (int k1 = 0; k1 < b; ++k1) {
        const double val = v0[static_cast<std::size_t>(k0)] + v1[static_cast<std::size_t>(k1)];
        auto& slot = bt[static_cast<std::size_t>(k0 + k1)];
        if (val > slot) {
          slot = val;
          at[static_cast<std::size_t>(k0 + k1)] = k0;
        }
      }
    }
    origin[static_cast<std::size_t>(t)] = u0.domain_lo() + u1.domain_lo();
    for (int s = 0; s < a + b - 1; ++s) {
      bt[static_cast<std::size_t>(s)] -= inst.unit_price(t) * (origin[static_cast<std::size_t>(t)] + s * h);
    }
  }

  // Candidate peaks: every attainable slot total.
  std::vector<double> peaks;
  for (int t = 0; t < T; ++t) {
    for (std::size_t s = 0; s < best[static_cast<std::size_t>(t)].size(); ++s) {
      peaks.push_back(origin[static_cast<std::size_t>(t)] + static_cast<double>(s) * h);
    }
  }
  std::sort(peaks.begin(), peaks.end());
  peaks.erase(std::unique(peaks.begin(), peaks.end()), peaks.end());

  // Prefix maxima of each slot table over totals.
  std::vector<std::vector<int>> pref(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) {
    const auto& bt = best[static_cast<std::size_t>(t)];
    auto& pt = pref[static_cast<std::size_t>(t)];
    pt.resize(bt.size());
    for (std::size_t s = 0; s < bt.size(); ++s) {
      pt[s] = (s > 0 && bt[static_cast<std::size_t>(pt[s - 1])] >= bt[s]) ? pt[s - 1]
                                                                       : static_cast<int>(s);
    }
  }
  for (double w : peaks) {
    double total = -inst.peak_price() * w;
    std::vector<int> pick(static_cast<std::size_t>(T));
    bool ok = true;
    for (int t = 0; t < T && ok; ++t) {
      const double o = origin[static_cast<std::size_t>(t)];
      const long lim = std::lround(std::floor((w - o) / h + 1e-9));
      if (lim < 0) {
        ok = false;
        break;
      }
      const auto& pt = pref[static_cast<std::size_t>(t)];
      const std::size_t idx = std::min<std::size_t>(static_cast<std::size_t>(lim), pt.size() - 1);
      pick[static_cast<std::size_t>(t)] = pt[idx];
      total += best[static_cast<std::size_t>(t)][static_cast<std::size_t>(pt[idx])];
    }
    if (!ok || total <= out.value) continue;
    out.value = total;
    for (int t = 0; t < T; ++t) {
      const int s = pick[static_cast<std::size_t>(t)];
      const int k0 = arg[static_cast<std::size_t>(t)][static_cast<std::size_t>(s)];
      out.x(0, t) = inst.utility(0, t).domain_lo() + k0 * h;
      out.x(1, t) = inst.utility(1, t).domain_lo() + (s - k0) * h;
    }
  }
  return out;
}

/// Two users, two slots, box constraints lo <= x <= hi written as rows
/// -x <= -lo (lo <= 0) and x <= hi, with the utility domain equal to the box.
inline Instance random_box_instance(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  InstanceSpec spec;
  spec.n_users = 2;
  spec.horizon = 2;
  for (int i = 0; i < 2; ++i) {
    for (int t = 0; t < 2; ++t) {
      const double lo = -U(rng);
      const double hi = 0.5 + 2.0 * U(rng);
      const double d = 1.5 + 1.5 * U(rng);
      const double c = 0.5 + 2.5 * U(rng);
      spec.utilities.push_back(UtilityFunction::scaled_log(c, d, lo, hi));
      spec.rows.push_back({{{i, t, -1.0}}, -lo});
      spec.rows.push_back({{{i, t, 1.0}}, hi});
    }
  }
  spec.unit_prices = {0.1 + 0.9 * U(rng), 0.1 + 0.9 * U(rng)};
  spec.peak_price = 0.5 * U(rng);
  return build_instance(spec);
}

/// N users on T slots with log utilities on [-1, 3], per-coordinate lower
/// bounds and a few random nonnegative sum rows.
inline Instance random_instance(std::mt19937_64& rng, int N, int T) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  InstanceSpec spec;
  spec.n_users = N;
  spec.horizon = T;
  for (int i = 0; i < N; ++i) {
    for (int t = 0; t < T; ++t) {
      spec.utilities.push_back(
          UtilityFunction::scaled_log(0.5 + 3.0 * U(rng), 1.5 + U(rng), -1.0, 3.0));
      spec.rows.push_back({{{i, t, -1.0}}, 1.0});
      spec.rows.push_back({{{i, t, 1.0}}, 3.0});
    }
  }
  const int extra = 1 + static_cast<int>(U(rng) * 3);
  for (int r = 0; r < extra; ++r) {
    ConstraintRow row;
    for (int i = 0; i < N; ++i) {
      for (int t = 0; t < T; ++t) {
        if (U(rng) < 0.6) row.coeffs.push_back({i, t, 0.5 + U(rng)});
      }
    }
    row.rhs = 0.5 + 2.0 * U(rng);
    spec.rows.push_back(std::move(row));
  }
  for (int t = 0; t < T; ++t) spec.unit_prices.push_back(0.05 + 0.5 * U(rng));
  spec.peak_price = 0.3 * U(rng);
  return build_instance(spec);
}

/// Random tree on n nodes: node k attaches to a uniformly chosen earlier node.
inline std::vector<std::pair<int, int>> random_tree_edges(std::mt19937_64& rng, int n) {
  std::vector<std::pair<int, int>> edges;
  for (int k = 1; k < n; ++k) {
    std::uniform_int_distribution<int> parent(0, k - 1);
    edges.emplace_back(parent(rng), k);
  }
  std::shuffle(edges.begin(), edges.end(), rng);
  return edges;
}

}  // namespace ecm::test
