#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <vector>

#include "gchain/errors.hpp"
#include "gchain/metric.hpp"
#include "gchain/net.hpp"
#include "gchain/young.hpp"

// Deterministic chaining functionals over an admissible net. Every infinite
// sum over levels stops at the terminal level: past it all set distances are
// exactly zero. One-distance functionals use the metric the net was built on.

namespace gchain {

namespace detail {
inline double pow2(double e) { return std::exp2(e); }

inline void require_two(const AdmissibleNet& net) {
  if (!net.two_distance()) throw ArgumentError("two-distance functional on a one-distance net");
}

inline void require_metric_index(int j) {
  if (j != 1 && j != 2) throw ArgumentError("metric index must be 1 or 2");
}
}  // namespace detail

/// sigma_m(t) = sum_{n >= m} 2^n d(t, T_n).
inline double sigma(const AdmissibleNet& net, std::size_t t, std::size_t m) {
  double acc = 0.0;
  for (std::size_t n = m; n <= net.terminal_level(); ++n) acc += std::ldexp(net.dist(n, t), static_cast<int>(n));
  return acc;
}

/// sigma(t, a) = sum_{n >= 0} 2^n min(d(t, T_n), a).
inline double sigma_trunc(const AdmissibleNet& net, std::size_t t, double a) {
  if (!(a > 0.0)) throw ArgumentError("sigma_trunc: cap must be positive");
  double acc = 0.0;
  for (std::size_t n = 0; n <= net.terminal_level(); ++n)
    acc += std::ldexp(std::min(net.dist(n, t), a), static_cast<int>(n));
  return acc;
}

/// Modulus tau(s, t) = max(sigma(t, d(s,t)), sigma(s, d(s,t))); zero on the diagonal.
inline double tau(const AdmissibleNet& net, std::size_t s, std::size_t t) {
  const double d = net.build_distance(s, t);
  if (s == t || d == 0.0) return 0.0;
  return std::max(sigma_trunc(net, t, d), sigma_trunc(net, s, d));
}

/// Deepest level at which s and t are not yet both resolved:
/// max{k >= 0 : d(s, T_k) + d(t, T_k) >= d(s, t)}.
inline std::size_t k_level(const AdmissibleNet& net, std::size_t s, std::size_t t) {
  const double d = net.build_distance(s, t);
  if (s == t || d == 0.0) throw ArgumentError("k_level: points coincide");
  std::size_t k = 0;
  for (std::size_t n = 1; n <= net.terminal_level(); ++n)
    if (net.dist(n, s) + net.dist(n, t) >= d) k = n;
  return k;
}

/// Cost of switching chains at level k + 1:
/// sigma_{k+1}(s) + sigma_{k+1}(t) + (2^{k+1} - 1) d(s, t).
inline double switch_cost(const AdmissibleNet& net, std::size_t s, std::size_t t, std::size_t k) {
  return sigma(net, s, k + 1) + sigma(net, t, k + 1) +
         (std::ldexp(1.0, static_cast<int>(k + 1)) - 1.0) * net.build_distance(s, t);
}

/// tau_bar(s, t): the switch cost at k(s, t), which minimizes it over k.
/// Satisfies tau_bar / 2 <= tau <= tau_bar.
inline double tau_bar(const AdmissibleNet& net, std::size_t s, std::size_t t) {
  if (s == t || net.build_distance(s, t) == 0.0) return 0.0;
  return switch_cost(net, s, t, k_level(net, s, t));
}

struct ChainingSequence {
  std::size_t base_level = 0;
  std::vector<std::size_t> indices;  // n_0 = base_level < n_1 < ...
  std::array<double, 2> dbar{0.0, 0.0};  // two-distance only: sum_i d_j(t, T_{n_i})
};

/// Halving sequence n_i = inf{n > n_{i-1} : 2 d(t, T_n) < d(t, T_{n_{i-1}})},
/// stopping once the distance reaches zero.
inline ChainingSequence chain_seq(const AdmissibleNet& net, std::size_t t, std::size_t m) {
  ChainingSequence seq{m, {m}, {}};
  std::size_t prev = m;
  while (net.dist(prev, t) > 0.0) {
    std::size_t next = prev + 1;
    while (!(2.0 * net.dist(next, t) < net.dist(prev, t))) ++next;
    seq.indices.push_back(next);
    prev = next;
  }
  return seq;
}

/// Net-based upper bound for gamma_2: sup_t sigma_0(t) on the greedy net.
inline double gamma2_upper(const AdmissibleNet& net) {
  double best = 0.0;
  for (std::size_t t = 0; t < net.size(); ++t) best = std::max(best, sigma(net, t, 0));
  return best;
}

inline double gamma2_upper(const FiniteMetricSpace& space, const YoungFunction& psi) {
  return gamma2_upper(build_net(space, psi));
}

// ---------------------------------------------------------------------------
// Two-distance functionals

/// sigma^j_m(t) = sum_{n >= m} 2^{p_j n} d_j(t, T_n).
inline double two_sigma(const AdmissibleNet& net, std::size_t t, std::size_t m, int j) {
  detail::require_metric_index(j);
  detail::require_two(net);
  const double p = net.space().exponent(j);
  double acc = 0.0;
  for (std::size_t n = m; n <= net.terminal_level(); ++n)
    acc += detail::pow2(p * static_cast<double>(n)) * net.dist(j, n, t);
  return acc;
}

/// sigma_j(t, a) = sum_{n >= 0} 2^{p_j n} min(d_j(t, T_n), a).
inline double two_sigma_trunc(const AdmissibleNet& net, std::size_t t, double a, int j) {
  detail::require_metric_index(j);
  detail::require_two(net);
  const double p = net.space().exponent(j);
  double acc = 0.0;
  for (std::size_t n = 0; n <= net.terminal_level(); ++n)
    acc += detail::pow2(p * static_cast<double>(n)) * std::min(net.dist(j, n, t), a);
  return acc;
}

/// Combined-condition sequence: n_i is the first n > n_{i-1} with
///   sum_j 2^{p_j n} d_j(t, T_{n_{i-1}}) > 2 sum_j 2^{p_j n} d_j(t, T_n).
/// Also returns dbar_j(t, pi_m(t)) = sum_i d_j(t, T_{n_i}).
inline ChainingSequence two_chain_seq(const AdmissibleNet& net, std::size_t t, std::size_t m) {
  detail::require_two(net);
  const double p1 = net.space().p1;
  const double p2 = net.space().p2;
  ChainingSequence seq{m, {m}, {net.dist(1, m, t), net.dist(2, m, t)}};
  std::size_t prev = m;
  while (net.dist(1, prev, t) > 0.0 || net.dist(2, prev, t) > 0.0) {
    std::size_t next = prev + 1;
    for (;; ++next) {
      const double w1 = detail::pow2(p1 * static_cast<double>(next));
      const double w2 = detail::pow2(p2 * static_cast<double>(next));
      const double lhs = w1 * net.dist(1, prev, t) + w2 * net.dist(2, prev, t);
      const double rhs = 2.0 * (w1 * net.dist(1, next, t) + w2 * net.dist(2, next, t));
      if (lhs > rhs) break;
    }
    seq.indices.push_back(next);
    seq.dbar[0] += net.dist(1, next, t);
    seq.dbar[1] += net.dist(2, next, t);
    prev = next;
  }
  return seq;
}

struct ModulusReport {
  bool two_distance = false;
  std::size_t k = 0;
  double tau = 0.0;      // one-distance tau, or tau_1 + tau_2
  double tau_bar = 0.0;
  // Two-distance only.
  std::size_t k1 = 0;
  std::size_t k2 = 0;
  double tau1 = 0.0;
  double tau2 = 0.0;
  std::array<double, 2> dbar{0.0, 0.0};  // dbar_j(s, t)
  double upper_bound_correction = 0.0;           // additive term in tau_bar <= 2(tau_1 + tau_2) + correction
};

inline ModulusReport modulus(const AdmissibleNet& net, std::size_t s, std::size_t t) {
  ModulusReport r;
  if (s == t || net.build_distance(s, t) == 0.0) return r;
  r.k = k_level(net, s, t);
  r.tau = tau(net, s, t);
  r.tau_bar = switch_cost(net, s, t, r.k);
  return r;
}

/// Geometric weight sum_{l=0}^{k} 2^{p l} = (2^{p(k+1)} - 1) / (2^p - 1).
inline double geometric_weight(double p, std::size_t k) {
  return std::expm1(std::numbers::ln2 * p * static_cast<double>(k + 1)) / std::expm1(std::numbers::ln2 * p);
}

/// Full two-distance modulus report for a pair.
inline ModulusReport two_modulus(const AdmissibleNet& net, std::size_t s, std::size_t t) {
  detail::require_two(net);
  ModulusReport r;
  r.two_distance = true;
  const auto& space = net.space();
  if (s == t || space.coincident(s, t)) return r;

  const std::array<double, 2> p{space.p1, space.p2};
  const std::array<double, 2> dst{space.d1(s, t), (*space.d2)(s, t)};
  const std::size_t top = net.terminal_level();

  auto single_k = [&](int j) {
    std::size_t k = 0;
    for (std::size_t n = 1; n <= top; ++n)
      if (net.dist(j, n, s) + net.dist(j, n, t) >= dst[static_cast<std::size_t>(j - 1)]) k = n;
    return k;
  };
  r.k1 = single_k(1);
  r.k2 = single_k(2);

  r.k = 0;
  for (std::size_t n = 1; n <= top; ++n) {
    double lhs = 0.0;
    double rhs = 0.0;
    for (int j = 1; j <= 2; ++j) {
      const double w = detail::pow2(p[static_cast<std::size_t>(j - 1)] * static_cast<double>(n));
      lhs += w * (net.dist(j, n, s) + net.dist(j, n, t));
      rhs += w * dst[static_cast<std::size_t>(j - 1)];
    }
    if (lhs >= rhs) r.k = n;
  }

  r.tau_bar = 0.0;
  for (int j = 1; j <= 2; ++j) {
    const auto jj = static_cast<std::size_t>(j - 1);
    r.tau_bar += two_sigma(net, s, r.k + 1, j) + two_sigma(net, t, r.k + 1, j) + geometric_weight(p[jj], r.k) * dst[jj];
  }

  auto tau_j = [&](int j) {
    const double a = dst[static_cast<std::size_t>(j - 1)];
    if (a == 0.0) return 0.0;
    return std::max(two_sigma_trunc(net, t, a, j), two_sigma_trunc(net, s, a, j));
  };
  r.tau1 = tau_j(1);
  r.tau2 = tau_j(2);
  r.tau = r.tau1 + r.tau2;

  const auto seq_s = two_chain_seq(net, s, r.k + 1);
  const auto seq_t = two_chain_seq(net, t, r.k + 1);
  for (std::size_t j = 0; j < 2; ++j) r.dbar[j] = seq_t.dbar[j] + dst[j] + seq_s.dbar[j];

  const auto k1 = static_cast<double>(r.k1);
  const auto k2 = static_cast<double>(r.k2);
  if (r.k1 >= r.k2)
    r.upper_bound_correction += detail::pow2(p[1]) / (detail::pow2(p[1]) - 1.0) *
                        (detail::pow2(k1 * p[1]) - detail::pow2(k2 * p[1])) * dst[1];
  if (r.k2 >= r.k1)
    r.upper_bound_correction += detail::pow2(p[0]) / (detail::pow2(p[0]) - 1.0) *
                        (detail::pow2(k2 * p[0]) - detail::pow2(k1 * p[0])) * dst[0];
  return r;
}

}  // namespace gchain
