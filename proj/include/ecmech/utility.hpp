#pragma once

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <type_traits>
#include <variant>

#include "ecmech/error.hpp"

namespace ecm {

/// c * ln(d + x)
struct ScaledLog {
  double weight = 1.0;
  double shift = 1.0;
  bool operator==(const ScaledLog&) const = default;
};

/// a * x - b * x^2 / 2
struct Quadratic {
  double slope = 0.0;
  double curvature = 1.0;
  bool operator==(const Quadratic&) const = default;
};

/// Relative tolerance applied at the edges of a utility domain. Points that
/// leave the domain by less than this are treated as boundary points, which
/// absorbs round-off from projections that land exactly on a bound.
inline constexpr double kDomainSlack = 1e-9;

/// A strictly concave per-slot utility with closed-form value, derivative and
/// inverse derivative, evaluated on the closed interval [domain_lo, domain_hi].
class UtilityFunction {
 public:
  using Family = std::variant<ScaledLog, Quadratic>;

  UtilityFunction(Family family, double domain_lo, double domain_hi)
      : family_(family), lo_(domain_lo), hi_(domain_hi) {
    validate();
  }

  static UtilityFunction scaled_log(double weight, double shift, double lo,
                                    double hi) {
    return UtilityFunction(ScaledLog{weight, shift}, lo, hi);
  }

  static UtilityFunction quadratic(double slope, double curvature, double lo,
                                   double hi) {
    return UtilityFunction(Quadratic{slope, curvature}, lo, hi);
  }

  const Family& family() const { return family_; }
  double domain_lo() const { return lo_; }
  double domain_hi() const { return hi_; }

  bool contains(double x) const {
    return x >= lo_ - slack(lo_) && x <= hi_ + slack(hi_);
  }

  double value(double x) const {
    require_in_domain(x);
    return std::visit(
        [x](const auto& f) -> double {
          using F = std::decay_t<decltype(f)>;
          if constexpr (std::is_same_v<F, ScaledLog>) {
            return f.weight * std::log(f.shift + x);
          } else {
            return f.slope * x - 0.5 * f.curvature * x * x;
          }
        },
        family_);
  }

  double derivative(double x) const {
    require_in_domain(x);
    return raw_derivative(x);
  }

  double second_derivative(double x) const {
    require_in_domain(x);
    return std::visit(
        [x](const auto& f) -> double {
          using F = std::decay_t<decltype(f)>;
          if constexpr (std::is_same_v<F, ScaledLog>) {
            const double u = f.shift + x;
            return -f.weight / (u * u);
          } else {
            return -f.curvature;
          }
        },
        family_);
  }

  /// Smallest and largest marginal utility over the domain.
  double min_derivative() const { return raw_derivative(hi_); }
  double max_derivative() const { return raw_derivative(lo_); }

  /// Demand whose marginal utility equals `price`; the result is clamped to
  /// the domain.
  double inverse_derivative(double price) const {
    const double dlo = min_derivative();
    const double dhi = max_derivative();
    if (!(price >= dlo - slack(dlo) && price <= dhi + slack(dhi))) {
      std::ostringstream os;
      os << "price " << price << " outside derivative range [" << dlo << ", "
         << dhi << "]";
      throw OutOfDomain(os.str());
    }
    const double x = std::visit(
        [price](const auto& f) -> double {
          using F = std::decay_t<decltype(f)>;
          if constexpr (std::is_same_v<F, ScaledLog>) {
            return f.weight / price - f.shift;
          } else {
            return (f.slope - price) / f.curvature;
          }
        },
        family_);
    return std::clamp(x, lo_, hi_);
  }

  /// Infimum of -v'' over the domain.
  double min_curvature() const {
    return std::visit(
        [this](const auto& f) -> double {
          using F = std::decay_t<decltype(f)>;
          if constexpr (std::is_same_v<F, ScaledLog>) {
            const double u = f.shift + hi_;
            return f.weight / (u * u);
          } else {
            return f.curvature;
          }
        },
        family_);
  }

  bool operator==(const UtilityFunction&) const = default;

 private:
  static double slack(double bound) {
    return kDomainSlack * std::max(1.0, std::abs(bound));
  }

  double raw_derivative(double x) const {
    return std::visit(
        [x](const auto& f) -> double {
          using F = std::decay_t<decltype(f)>;
          if constexpr (std::is_same_v<F, ScaledLog>) {
            return f.weight / (f.shift + x);
          } else {
            return f.slope - f.curvature * x;
          }
        },
        family_);
  }

  void require_in_domain(double x) const {
    if (!contains(x)) {
      std::ostringstream os;
      os << "demand " << x << " outside utility domain [" << lo_ << ", " << hi_
         << "]";
      throw OutOfDomain(os.str());
    }
  }

  void validate() const {
    if (!std::isfinite(lo_) || !std::isfinite(hi_) || !(lo_ < hi_)) {
      throw InvalidUtility("utility domain must be a finite interval lo < hi");
    }
    std::visit(
        [this](const auto& f) {
          using F = std::decay_t<decltype(f)>;
          if constexpr (std::is_same_v<F, ScaledLog>) {
            if (!(f.weight > 0.0) || !(f.shift > 0.0) ||
                !std::isfinite(f.weight) || !std::isfinite(f.shift)) {
              throw InvalidUtility("scaled log needs weight > 0 and shift > 0");
            }
            if (!(f.shift + lo_ > 0.0)) {
              throw InvalidUtility(
                  "scaled log undefined on its domain (shift + lo <= 0)");
            }
          } else {
            if (!(f.curvature > 0.0) || !std::isfinite(f.curvature) ||
                !std::isfinite(f.slope)) {
              throw InvalidUtility("quadratic needs curvature > 0");
            }
          }
        },
        family_);
  }

  Family family_;
  double lo_;
  double hi_;
};

inline std::string family_name(const UtilityFunction& u) {
  return std::holds_alternative<ScaledLog>(u.family()) ? "scaled_log"
                                                       : "quadratic";
}

}  // namespace ecm
