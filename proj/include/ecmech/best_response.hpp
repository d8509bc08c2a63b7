#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <future>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace ecm {

/// How a single message coordinate enters the payoff when all else is fixed.
enum class CoordinateShape {
  Concave,    // searched by golden section over [lo, hi]
  Quadratic,  // at most quadratic: three evaluations give the vertex
};

struct Coordinate {
  std::string label;
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  CoordinateShape shape = CoordinateShape::Quadratic;
};

struct Deviation {
  int user = 0;
  std::string coordinate;  // label, or "joint" for random perturbations
  double from = 0.0;
  double to = 0.0;
  double improvement = 0.0;
};

struct UserProbe {
  int user = 0;
  double max_improvement = 0.0;
  std::optional<Deviation> best;  // only set when some probe improved
  std::vector<Deviation> per_coordinate;
  double joint_max_improvement = 0.0;
  int joint_samples = 0;
};

struct NeConfig {
  int deviation_samples = 10000;
  double line_search_tol = 1e-12;
  double tol = 1e-7;
  std::uint64_t seed = 0;
  bool parallel = true;
};

struct NeReport {
  std::vector<UserProbe> users;
  double max_improvement = 0.0;
  std::optional<Deviation> best;
  double tol = 0.0;
  std::uint64_t seed = 0;
  int deviation_samples = 0;
  bool pass = false;
};

namespace detail {

inline double clip(double v, const Coordinate& c) {
  return std::clamp(v, c.lo, c.hi);
}

/// argmax of a unimodal g on [a, b].
inline double golden_section_max(const std::function<double(double)>& g,
                                 double a, double b, double tol) {
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  const double width = b - a;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double gc = g(c);
  double gd = g(d);
  while (b - a > tol * std::max(1.0, width)) {
    if (gc >= gd) {
      b = d;
      d = c;
      gd = gc;
      c = b - inv_phi * (b - a);
      gc = g(c);
    } else {
      a = c;
      c = d;
      gc = gd;
      d = a + inv_phi * (b - a);
      gd = g(d);
    }
  }
  return 0.5 * (a + b);
}

inline std::uint64_t user_seed(std::uint64_t seed, int user) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(user)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

}  // namespace detail

/// Probes one user's payoff around x0: a one-dimensional best response in
/// every coordinate, then random joint perturbations with log-uniform scale.
/// Improvements are always measured by evaluating the payoff itself.
inline UserProbe probe_user(int user, const Eigen::VectorXd& x0,
                            const std::vector<Coordinate>& coords,
                            const std::function<double(const Eigen::VectorXd&)>& payoff,
                            const NeConfig& cfg) {
  UserProbe probe;
  probe.user = user;
  const double base = payoff(x0);

  auto consider = [&](Deviation d) {
    if (d.improvement > probe.max_improvement) {
      probe.max_improvement = d.improvement;
      probe.best = d;
    }
  };

  Eigen::VectorXd x = x0;
  for (std::size_t k = 0; k < coords.size(); ++k) {
    const Coordinate& c = coords[k];
    const double v0 = x0(static_cast<Eigen::Index>(k));
    auto along = [&](double v) {
      x(static_cast<Eigen::Index>(k)) = v;
      const double f = payoff(x);
      x(static_cast<Eigen::Index>(k)) = v0;
      return f;
    };

    std::vector<double> candidates;
    if (c.shape == CoordinateShape::Concave) {
      candidates.push_back(detail::golden_section_max(along, c.lo, c.hi, cfg.line_search_tol));
      candidates.push_back(c.lo);
      candidates.push_back(c.hi);
    } else {
      const double h = 1e-2 * std::max(1.0, std::abs(v0));
      double a = v0 - h;
      double b = v0 + h;
      if (a < c.lo) { a = c.lo; b = c.lo + 2.0 * h; }
      if (b > c.hi) { b = c.hi; a = std::max(c.lo, c.hi - 2.0 * h); }
      const double m = 0.5 * (a + b);
      const double fa = along(a);
      const double fm = along(m);
      const double fb = along(b);
      const double hh = 0.5 * (b - a);
      const double curv = (fa - 2.0 * fm + fb) / (hh * hh);
      const double slope = (fb - fa) / (2.0 * hh);
      if (curv < 0.0) {
        candidates.push_back(detail::clip(m - slope / curv, c));
      } else {
        // Convex or flat along this line: the best point lies on the boundary.
        const double span = 1e3 * std::max(1.0, std::abs(v0));
        candidates.push_back(detail::clip(v0 - span, c));
        candidates.push_back(detail::clip(v0 + span, c));
      }
      candidates.push_back(a);
      candidates.push_back(b);
      if (std::isfinite(c.lo)) candidates.push_back(c.lo);
      if (std::isfinite(c.hi)) candidates.push_back(c.hi);
    }

    Deviation best{user, c.label, v0, v0, 0.0};
    for (double v : candidates) {
      const double gain = along(v) - base;
      if (gain > best.improvement) {
        best.to = v;
        best.improvement = gain;
      }
    }
    probe.per_coordinate.push_back(best);
    consider(best);
  }

  std::mt19937_64 rng(detail::user_seed(cfg.seed, user));
  std::uniform_real_distribution<double> log_scale(-6.0, -1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int s = 0; s < cfg.deviation_samples; ++s) {
    const double scale = std::pow(10.0, log_scale(rng));
    Eigen::VectorXd z = x0;
    for (std::size_t k = 0; k < coords.size(); ++k) {
      const auto idx = static_cast<Eigen::Index>(k);
      z(idx) = detail::clip(x0(idx) + scale * std::max(1.0, std::abs(x0(idx))) * gauss(rng),
                            coords[k]);
    }
    const double gain = payoff(z) - base;
    probe.joint_max_improvement = std::max(probe.joint_max_improvement, gain);
    if (gain > probe.max_improvement) {
      // Report the coordinate that moved the most.
      Eigen::Index arg = 0;
      (z - x0).cwiseAbs().maxCoeff(&arg);
      consider({user, "joint:" + coords[static_cast<std::size_t>(arg)].label,
                x0(arg), z(arg), gain});
    }
  }
  probe.joint_samples = cfg.deviation_samples;
  return probe;
}

/// Runs probe(i) for every user, in parallel when configured, and reduces in
/// user order.
inline NeReport collect_probes(int n_users, const std::function<UserProbe(int)>& probe,
                               const NeConfig& cfg) {
  NeReport report;
  report.tol = cfg.tol;
  report.seed = cfg.seed;
  report.deviation_samples = cfg.deviation_samples;
  if (cfg.parallel && n_users > 1) {
    std::vector<std::future<UserProbe>> jobs;
    for (int i = 0; i < n_users; ++i) {
      jobs.push_back(std::async(std::launch::async, probe, i));
    }
    for (auto& j : jobs) report.users.push_back(j.get());
  } else {
    for (int i = 0; i < n_users; ++i) report.users.push_back(probe(i));
  }
  for (const auto& u : report.users) {
    if (u.max_improvement > report.max_improvement) {
      report.max_improvement = u.max_improvement;
      report.best = u.best;
    }
  }
  report.pass = report.max_improvement <= cfg.tol;
  return report;
}

}  // namespace ecm
