#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "gchain/errors.hpp"

namespace gchain {

/// 2^e - 1, exact at integer e >= 1 (budgets are floors of these values).
inline double pow2_minus_one(double e) { return e >= 1.0 ? std::exp2(e) - 1.0 : std::expm1(std::numbers::ln2 * e); }

/// Orlicz-type gauge. Two families are supported:
///   PhiP(p):      x -> 2^{x^p} - 1
///   Bernstein(N): x -> 2^{min(sqrt(N) x, x^2)} - 1
/// Both vanish at 0, equal 1 at 1, and are continuous and strictly increasing.
class YoungFunction {
 public:
  enum class Kind { PhiP, Bernstein };

  static YoungFunction phi_p(double p) {
    if (!(p > 0.0) || !std::isfinite(p)) throw ArgumentError("phi_p: exponent must be positive");
    return YoungFunction(Kind::PhiP, p);
  }

  static YoungFunction bernstein(double n) {
    if (!(n >= 1.0) || n != std::floor(n) || !std::isfinite(n))
      throw ArgumentError("bernstein: N must be a positive integer");
    return YoungFunction(Kind::Bernstein, n);
  }

  [[nodiscard]] Kind kind() const noexcept { return kind_; }
  [[nodiscard]] double parameter() const noexcept { return param_; }

  [[nodiscard]] double eval(double x) const {
    if (!(x >= 0.0)) throw DomainError("young function evaluated at a negative argument");
    return pow2_minus_one(exponent(x));
  }

  [[nodiscard]] double inverse(double y) const {
    if (!(y >= 0.0)) throw DomainError("young function inverse evaluated at a negative argument");
    const double level = std::log1p(y) / std::numbers::ln2;  // log2(1 + y)
    if (kind_ == Kind::PhiP) return std::pow(level, 1.0 / param_);
    return std::max(level / std::sqrt(param_), std::sqrt(level));
  }

  double operator()(double x) const { return eval(x); }

  /// Subadditivity constant K with psi^{-1}(xy) <= K (psi^{-1}(x) + psi^{-1}(y)).
  [[nodiscard]] double analytic_subadditivity_constant() const noexcept {
    if (kind_ == Kind::PhiP && param_ < 1.0) return std::exp2(1.0 / param_ - 1.0);
    return 1.0;
  }

  [[nodiscard]] std::string describe() const {
    std::ostringstream os;
    os << (kind_ == Kind::PhiP ? "phi_p(p=" : "bernstein(N=") << param_ << ")";
    return os.str();
  }

  friend bool operator==(const YoungFunction&, const YoungFunction&) = default;

 private:
  YoungFunction(Kind k, double p) : kind_(k), param_(p) {}

  [[nodiscard]] double exponent(double x) const {
    if (kind_ == Kind::PhiP) return std::pow(x, param_);
    return std::min(std::sqrt(param_) * x, x * x);
  }

  Kind kind_;
  double param_;
};

inline double eval(const YoungFunction& psi, double x) { return psi.eval(x); }
inline double eval_inv(const YoungFunction& psi, double y) { return psi.inverse(y); }

/// The convex companion of the Bernstein gauge: 2^{g(x)} - 1 where g is x^2
/// up to sqrt(N) and continues along its tangent 2 sqrt(N) x - N beyond.
/// Satisfies companion(x/2) <= bernstein(x) <= companion(x) for x >= 0.
inline double bernstein_convex_companion(double n, double x) {
  if (!(x >= 0.0)) throw DomainError("companion evaluated at a negative argument");
  const double root = std::sqrt(n);
  const double g = x <= root ? x * x : 2.0 * root * x - n;
  return pow2_minus_one(g);
}

/// Log-spaced grid for the subadditivity search: x = 2^e for
/// e in [log2_min, log2_max] with `steps_per_octave` points per unit of e.
struct LogGrid {
  double log2_min = -20.0;
  double log2_max = 40.0;
  int steps_per_octave = 4;

  [[nodiscard]] std::vector<double> points() const {
    std::vector<double> out;
    if (steps_per_octave <= 0 || !(log2_max >= log2_min)) return out;
    const auto count =
        static_cast<std::size_t>(std::floor((log2_max - log2_min) * steps_per_octave + 1e-9)) + 1;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i)
      out.push_back(std::exp2(log2_min + static_cast<double>(i) / steps_per_octave));
    return out;
  }

  [[nodiscard]] std::string describe() const {
    std::ostringstream os;
    os << "x,y = 2^e, e in [" << log2_min << ", " << log2_max << "], " << steps_per_octave
       << " steps per octave";
    return os.str();
  }
};

struct SubadditivityCertificate {
  double K = 1.0;
  double grid_max_ratio = 0.0;
  LogGrid grid;
};

/// Certifies the exponential-type condition on a finite grid. K is the
/// analytic constant for the family, raised to the grid maximum if the grid
/// ever exceeded it.
inline SubadditivityCertificate subadd_constant(const YoungFunction& psi, const LogGrid& grid = {}) {
  const auto xs = grid.points();
  if (xs.empty()) throw ArgumentError("subadd_constant: empty grid");
  std::vector<double> inv(xs.size());
  std::transform(xs.begin(), xs.end(), inv.begin(), [&](double x) { return psi.inverse(x); });

  double worst = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    for (std::size_t j = i; j < xs.size(); ++j) {
      const double num = psi.inverse(xs[i] * xs[j]);
      worst = std::max(worst, num / (inv[i] + inv[j]));
    }
  }
  return {std::max(psi.analytic_subadditivity_constant(), worst), worst, grid};
}

struct EmpiricalOrliczNorm {
  double value = 0.0;
  std::size_t sample_count = 0;
  double tolerance = 0.0;
};

namespace detail {
inline double mean_gauge(std::span<const double> abs_samples, const YoungFunction& psi, double scale) {
  double acc = 0.0;
  for (double a : abs_samples) acc += psi.eval(a / scale);
  return acc / static_cast<double>(abs_samples.size());
}
}  // namespace detail

/// Empirical Orlicz norm inf{C > 0 : mean psi(|s_i| / C) <= 1}, by bisection
/// on the bracket [max|s| / psi^{-1}(n), 8 max|s|].
inline EmpiricalOrliczNorm orlicz_norm(std::span<const double> samples, const YoungFunction& psi,
                                       double tol = 1e-6) {
  if (samples.empty()) throw ArgumentError("orlicz_norm: no samples");
  if (!(tol > 0.0)) throw ArgumentError("orlicz_norm: tolerance must be positive");

  std::vector<double> abs_samples;
  abs_samples.reserve(samples.size());
  double max_abs = 0.0;
  for (double s : samples) {
    if (!std::isfinite(s)) throw DataError("orlicz_norm: non-finite sample");
    const double a = std::fabs(s);
    max_abs = std::max(max_abs, a);
    if (a > 0.0) abs_samples.push_back(a);
  }
  EmpiricalOrliczNorm out{0.0, samples.size(), tol};
  if (max_abs == 0.0) return out;

  // Zero samples contribute psi(0) = 0 to the mean; rescale instead of storing them.
  const double keep = static_cast<double>(abs_samples.size()) / static_cast<double>(samples.size());
  auto mean = [&](double c) { return keep * detail::mean_gauge(abs_samples, psi, c); };

  double lo = max_abs / psi.inverse(static_cast<double>(samples.size()));
  double hi = 8.0 * max_abs;
  double best = hi;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double m = mean(mid);
    if (m <= 1.0) {
      hi = mid;
      best = mid;
      if (m >= 1.0 - tol) break;
    } else {
      lo = mid;
    }
    if (hi - lo <= 1e-15 * hi) break;
  }
  out.value = best;
  return out;
}

}  // namespace gchain
