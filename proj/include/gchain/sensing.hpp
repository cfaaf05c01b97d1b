#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "gchain/errors.hpp"
#include "gchain/parallel.hpp"
#include "gchain/rng.hpp"

namespace gchain {

enum class Ensemble { Gaussian, Rademacher };

/// phi_2 norm of a standard Gaussian, sqrt(8 ln 2 / 3). Rademacher sums are
/// dominated by it as well, so it serves as the row bound for both ensembles.
inline const double kGaussianPhi2Norm = std::sqrt(8.0 * std::numbers::ln2 / 3.0);

struct MeasurementMatrix {
  Eigen::MatrixXd a;
  Ensemble ensemble = Ensemble::Gaussian;
  double alpha = kGaussianPhi2Norm;

  [[nodiscard]] std::size_t rows() const noexcept { return static_cast<std::size_t>(a.rows()); }
  [[nodiscard]] std::size_t cols() const noexcept { return static_cast<std::size_t>(a.cols()); }
};

/// Unit-variance i.i.d. entries scaled by N^{-1/2}.
inline MeasurementMatrix sample_matrix(std::size_t n, std::size_t m, Ensemble ensemble, std::uint64_t seed,
                                       std::uint64_t index = 0) {
  if (n < 1 || m < 1) throw ArgumentError("measurement matrix needs N, M >= 1");
  MeasurementMatrix out;
  out.ensemble = ensemble;
  out.a.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
  CounterRng rng = CounterRng(seed).substream(index);
  const double s = 1.0 / std::sqrt(static_cast<double>(n));
  for (Eigen::Index j = 0; j < out.a.cols(); ++j)
    for (Eigen::Index i = 0; i < out.a.rows(); ++i)
      out.a(i, j) = s * (ensemble == Ensemble::Gaussian ? rng.normal() : rng.rademacher());
  return out;
}

/// Binomial coefficient as a double (exact well beyond the enumeration guard).
inline double binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0.0;
  k = std::min(k, n - k);
  double r = 1.0;
  for (std::size_t i = 1; i <= k; ++i) r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
  return std::round(r);
}

inline constexpr double kSupportEnumerationLimit = 1e6;

namespace detail {

/// Largest |eigenvalue| of G_S - I for the principal submatrix of `gram` on `support`.
template <int K>
double support_deviation_fixed(const Eigen::MatrixXd& gram, const std::vector<std::size_t>& support) {
  Eigen::Matrix<double, K, K> sub;
  for (int i = 0; i < K; ++i)
    for (int j = 0; j < K; ++j)
      sub(i, j) = gram(static_cast<Eigen::Index>(support[static_cast<std::size_t>(i)]),
                       static_cast<Eigen::Index>(support[static_cast<std::size_t>(j)]));
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, K, K>> es;
  if constexpr (K == 2 || K == 3) es.computeDirect(sub, Eigen::EigenvaluesOnly);
  else es.compute(sub, Eigen::EigenvaluesOnly);
  const auto& ev = es.eigenvalues();
  return std::max(std::fabs(ev(0) - 1.0), std::fabs(ev(K - 1) - 1.0));
}

inline double support_deviation(const Eigen::MatrixXd& gram, const std::vector<std::size_t>& support) {
  switch (support.size()) {
    case 1: {
      const auto i = static_cast<Eigen::Index>(support[0]);
      return std::fabs(gram(i, i) - 1.0);
    }
    case 2: return support_deviation_fixed<2>(gram, support);
    case 3: return support_deviation_fixed<3>(gram, support);
    case 4: return support_deviation_fixed<4>(gram, support);
    default: break;
  }
  const auto k = static_cast<Eigen::Index>(support.size());
  Eigen::MatrixXd sub(k, k);
  for (Eigen::Index i = 0; i < k; ++i)
    for (Eigen::Index j = 0; j < k; ++j)
      sub(i, j) = gram(static_cast<Eigen::Index>(support[static_cast<std::size_t>(i)]),
                       static_cast<Eigen::Index>(support[static_cast<std::size_t>(j)]));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sub, Eigen::EigenvaluesOnly);
  const auto& ev = es.eigenvalues();
  return std::max(std::fabs(ev(0) - 1.0), std::fabs(ev(k - 1) - 1.0));
}

/// Advance `c` to the next m-subset of [0, n) in lexicographic order.
inline bool next_combination(std::vector<std::size_t>& c, std::size_t n) {
  const std::size_t m = c.size();
  std::size_t i = m;
  while (i > 0) {
    --i;
    if (c[i] < n - m + i) {
      ++c[i];
      for (std::size_t j = i + 1; j < m; ++j) c[j] = c[j - 1] + 1;
      return true;
    }
  }
  return false;
}

}  // namespace detail

/// delta_m(A) = max over supports S with |S| = m of |A_S^T A_S - I|_op.
inline double delta_exact(const Eigen::MatrixXd& a, std::size_t m) {
  const auto cols = static_cast<std::size_t>(a.cols());
  if (m < 1 || m > cols) throw ArgumentError("delta_exact: sparsity must lie in [1, M]");
  if (binomial(cols, m) > kSupportEnumerationLimit)
    throw SizeError("delta_exact: more than 1e6 supports, use delta_lower instead");
  const Eigen::MatrixXd gram = a.transpose() * a;
  std::vector<std::size_t> support(m);
  std::iota(support.begin(), support.end(), std::size_t{0});
  double best = 0.0;
  do {
    best = std::max(best, detail::support_deviation(gram, support));
  } while (detail::next_combination(support, cols));
  return best;
}

/// Lower bound on delta_m from random supports: each visited support
/// contributes its exact deviation (attained by an eigenvector) together with
/// one random unit vector on it. Exhaustive when `trials` reaches the number
/// of supports.
inline double delta_lower(const Eigen::MatrixXd& a, std::size_t m, std::size_t trials, std::uint64_t seed) {
  const auto cols = static_cast<std::size_t>(a.cols());
  if (m < 1 || m > cols) throw ArgumentError("delta_lower: sparsity must lie in [1, M]");
  if (trials < 1) throw ArgumentError("delta_lower: trials must be at least 1");
  if (static_cast<double>(trials) >= binomial(cols, m)) return delta_exact(a, m);
  const Eigen::MatrixXd gram = a.transpose() * a;
  CounterRng rng(seed);
  std::vector<std::size_t> perm(cols);
  double best = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    for (std::size_t i = 0; i < m; ++i) std::swap(perm[i], perm[i + rng.below(cols - i)]);
    std::vector<std::size_t> support(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(m));
    std::sort(support.begin(), support.end());
    Eigen::VectorXd x(static_cast<Eigen::Index>(m));
    for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = rng.normal();
    if (x.norm() > 0.0) {
      x.normalize();
      double q = 0.0;
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j)
          q += x(static_cast<Eigen::Index>(i)) * x(static_cast<Eigen::Index>(j)) *
               gram(static_cast<Eigen::Index>(support[i]), static_cast<Eigen::Index>(support[j]));
      best = std::max(best, std::fabs(q - 1.0));
    }
    best = std::max(best, detail::support_deviation(gram, support));
  }
  return best;
}

struct RipReport {
  std::size_t m = 0;
  bool has_exact = false;
  double delta_exact = 0.0;
  double delta_lower = 0.0;
  std::size_t support_count_checked = 0;
  bool threshold_pass = false;  // delta < sqrt(2) - 1
};

inline const double kRipThreshold = std::numbers::sqrt2 - 1.0;

/// Exact value when enumeration is allowed, plus the random-support lower bound.
inline RipReport rip_report(const Eigen::MatrixXd& a, std::size_t m, std::size_t trials, std::uint64_t seed) {
  RipReport r;
  r.m = m;
  const double supports = binomial(static_cast<std::size_t>(a.cols()), m);
  r.delta_lower = delta_lower(a, m, trials, seed);
  r.support_count_checked = static_cast<std::size_t>(std::min(supports, static_cast<double>(trials)));
  if (supports <= kSupportEnumerationLimit) {
    r.has_exact = true;
    r.delta_exact = delta_exact(a, m);
    r.support_count_checked = static_cast<std::size_t>(supports);
  }
  r.threshold_pass = (r.has_exact ? r.delta_exact : r.delta_lower) < kRipThreshold;
  return r;
}

struct OrderStatReport {
  std::size_t k = 0;
  std::size_t M = 0;
  std::size_t trials = 0;
  double estimate = 0.0;
  double std_error = 0.0;
};

/// Monte Carlo E (sum_{i <= k} (g*_i)^2)^{1/2}, g* the magnitudes of M
/// standard Gaussians in decreasing order.
inline OrderStatReport gaussian_order_stat(std::size_t k, std::size_t M, std::size_t trials, std::uint64_t seed) {
  if (k < 1 || k > M) throw ArgumentError("order statistic needs 1 <= k <= M");
  if (trials < 1) throw ArgumentError("order statistic needs at least one trial");
  std::vector<double> g(M);
  double sum = 0.0;
  double sum_sq = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    CounterRng rng = CounterRng(seed).substream(t);
    for (double& v : g) {
      const double x = rng.normal();
      v = x * x;
    }
    std::nth_element(g.begin(), g.begin() + static_cast<std::ptrdiff_t>(k - 1), g.end(), std::greater<>());
    double top = 0.0;
    for (std::size_t i = 0; i < k; ++i) top += g[i];
    const double r = std::sqrt(top);
    sum += r;
    sum_sq += r * r;
  }
  const double n = static_cast<double>(trials);
  OrderStatReport rep{k, M, trials, sum / n, 0.0};
  if (trials > 1) {
    const double var = std::max(0.0, (sum_sq - n * rep.estimate * rep.estimate) / (n - 1.0));
    rep.std_error = std::sqrt(var / n);
  }
  return rep;
}

/// Gaussian-width surrogate for gamma_2 of the 2m-sparse unit sphere.
inline double gamma2_sparse(std::size_t m, std::size_t M, std::size_t trials, std::uint64_t seed) {
  if (m < 1 || 2 * m > M) throw ArgumentError("gamma2_sparse needs 1 <= 2m <= M");
  return gaussian_order_stat(2 * m, M, trials, seed).estimate;
}

/// Envelope constants for the order-statistic lemma and the width constant.
struct OrderStatCalibration {
  double c0 = 1.0;  // upper envelope 2 sqrt(k log(c0 M / k))
  double c1 = 1.0;  // lower envelope sqrt(c1 k log(M / k))
  double K0 = 1.0;  // gamma = K0 sqrt(m log(c0 M / m))
  double c1_raw = 0.0;
  double c0_raw = 0.0;
  std::vector<std::size_t> ks;
  std::vector<std::size_t> Ms;
  std::size_t trials = 0;
  std::uint64_t seed = 0;
};

inline double lower_envelope(double c1, std::size_t k, std::size_t M) {
  return std::sqrt(c1 * static_cast<double>(k) * std::log(static_cast<double>(M) / static_cast<double>(k)));
}

inline double upper_envelope(double c0, std::size_t k, std::size_t M) {
  return 2.0 * std::sqrt(static_cast<double>(k) * std::log(c0 * static_cast<double>(M) / static_cast<double>(k)));
}

/// Fits the envelopes over a (k, M) grid with k < M:
///   c1 = 0.9 * min E^2 / (k log(M/k)), rounded down to two decimals,
///   c0 = 1.1 * max (k/M) exp(E^2 / (4k)), rounded up to two decimals,
///   K0 = 1.05 * max over even k of E_k / sqrt((k/2) log(2 c0 M / k)), rounded up.
inline OrderStatCalibration calibrate_order_stats(const std::vector<std::size_t>& ks, const std::vector<std::size_t>& Ms,
                                                  std::size_t trials, std::uint64_t seed) {
  if (ks.empty() || Ms.empty()) throw ArgumentError("calibration grid is empty");
  OrderStatCalibration cal;
  cal.ks = ks;
  cal.Ms = Ms;
  cal.trials = trials;
  cal.seed = seed;
  double c1 = std::numeric_limits<double>::infinity();
  double c0 = 0.0;
  std::vector<std::pair<std::size_t, std::pair<std::size_t, double>>> evens;
  std::uint64_t stream = 0;
  for (std::size_t M : Ms)
    for (std::size_t k : ks) {
      if (k >= M) throw ArgumentError("calibration grid needs k < M");
      const double e = gaussian_order_stat(k, M, trials, mix64(seed + stream++)).estimate;
      const double kd = static_cast<double>(k);
      c1 = std::min(c1, e * e / (kd * std::log(static_cast<double>(M) / kd)));
      c0 = std::max(c0, kd / static_cast<double>(M) * std::exp(e * e / (4.0 * kd)));
      if (k % 2 == 0) evens.push_back({k, {M, e}});
    }
  cal.c1_raw = c1;
  cal.c0_raw = c0;
  cal.c1 = std::floor(0.9 * c1 * 100.0) / 100.0;
  cal.c0 = std::ceil(1.1 * c0 * 100.0) / 100.0;
  double k0 = 0.0;
  for (const auto& [k, me] : evens) {
    const double half = static_cast<double>(k / 2);
    k0 = std::max(k0, me.second / std::sqrt(half * std::log(cal.c0 * static_cast<double>(me.first) / half)));
  }
  cal.K0 = k0 > 0.0 ? std::ceil(1.05 * k0 * 100.0) / 100.0 : 1.0;
  return cal;
}

/// Coefficient of determination of the least-squares line y ~ a + b x.
inline double regression_r2(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy * sxy / (sxx * syy);
}

struct RipConstants {
  double A = 1.0;
  double B = 1.0;
  double c0 = 1.0;
  double K0 = 1.0;
};

struct RipTailRow {
  std::size_t index = 0;
  double delta = 0.0;
  bool exceeds = false;
  bool threshold_pass = false;
};

struct RipTailReport {
  double gamma = 0.0;
  double delta_level = 0.0;   // (A + B + c0) N^{-1/2} gamma alpha^2
  bool delta_at_most_one = false;
  double bound = 0.0;         // exp(-ln 2 * gamma^2)
  double frequency = 0.0;     // fraction of matrices with delta_{2m} > delta_level
  double threshold_rate = 0.0;
  bool dominated = false;
  bool exact = false;
  std::vector<RipTailRow> rows;
};

/// gamma = K0 sqrt(m log(c0 M / m)).
inline double rip_gamma(std::size_t m, std::size_t M, const RipConstants& c) {
  return c.K0 * std::sqrt(static_cast<double>(m) * std::log(c.c0 * static_cast<double>(M) / static_cast<double>(m)));
}

/// Samples `matrices` matrices and compares the frequency of delta_{2m} above
/// the theorem's level with exp(-ln 2 gamma^2). Uses delta_exact when the
/// support count allows, otherwise delta_lower with `lower_trials` supports.
inline RipTailReport rip_tail_check(std::size_t n, std::size_t M, std::size_t m, Ensemble ensemble,
                                    std::size_t matrices, std::uint64_t seed, const RipConstants& c,
                                    unsigned threads = 1, std::size_t lower_trials = 20000) {
  if (matrices < 1) throw ArgumentError("rip_tail_check needs at least one matrix");
  if (m < 1 || 2 * m > M) throw ArgumentError("rip_tail_check needs 1 <= 2m <= M");
  RipTailReport rep;
  rep.gamma = rip_gamma(m, M, c);
  const double alpha = kGaussianPhi2Norm;
  rep.delta_level = (c.A + c.B + c.c0) / std::sqrt(static_cast<double>(n)) * rep.gamma * alpha * alpha;
  rep.delta_at_most_one = rep.delta_level <= 1.0;
  rep.bound = std::exp(-std::numbers::ln2 * rep.gamma * rep.gamma);
  rep.exact = binomial(M, 2 * m) <= kSupportEnumerationLimit;
  rep.rows.resize(matrices);
  parallel_for(matrices, threads, [&](std::size_t i) {
    const auto mat = sample_matrix(n, M, ensemble, seed, i);
    const double d = rep.exact ? delta_exact(mat.a, 2 * m) : delta_lower(mat.a, 2 * m, lower_trials, mix64(seed + i));
    rep.rows[i] = {i, d, d > rep.delta_level, d < kRipThreshold};
  });
  std::size_t exceed = 0;
  std::size_t below = 0;
  for (const auto& r : rep.rows) {
    exceed += r.exceeds ? 1 : 0;
    below += r.threshold_pass ? 1 : 0;
  }
  rep.frequency = static_cast<double>(exceed) / static_cast<double>(matrices);
  rep.threshold_rate = static_cast<double>(below) / static_cast<double>(matrices);
  rep.dominated = rep.frequency <= rep.bound;
  return rep;
}

}  // namespace gchain
