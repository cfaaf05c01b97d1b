#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "gchain/chain.hpp"
#include "gchain/errors.hpp"
#include "gchain/metric.hpp"
#include "gchain/net.hpp"
#include "gchain/parallel.hpp"
#include "gchain/rng.hpp"
#include "gchain/young.hpp"

namespace gchain {

/// sqrt(8 / (3 ln 2)): turns the increment standard deviation of a centered
/// Gaussian process into a distance satisfying the phi_2 increment condition.
inline const double kGaussianDistanceScale = std::sqrt(8.0 / (3.0 * std::numbers::ln2));

struct GaussianCov {
  Eigen::MatrixXd cov;
};

struct Fbm {
  double hurst = 0.5;
  std::vector<double> grid;
};

enum class Noise { Gaussian, SymExponential };

/// X(t) = sum_i t_i xi_i over i.i.d. noise variables xi_i.
struct CanonicalTwoDist {
  std::vector<std::vector<double>> coeff_points;
  Noise noise = Noise::SymExponential;
  std::size_t n_vars = 0;
};

using ProcessModel = std::variant<GaussianCov, Fbm, CanonicalTwoDist>;

/// Grid {i / count : i = 1..count}.
inline std::vector<double> uniform_grid(std::size_t count) {
  std::vector<double> g(count);
  for (std::size_t i = 0; i < count; ++i) g[i] = static_cast<double>(i + 1) / static_cast<double>(count);
  return g;
}

inline void check_hurst(double h) {
  if (!(h > 0.0 && h < 1.0)) throw ArgumentError("Hurst index must lie in (0, 1)");
}

inline void check_grid(const std::vector<double>& grid) {
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] >= 0.0 && grid[i] <= 1.0)) throw ArgumentError("grid points must lie in [0, 1]");
    if (i > 0 && !(grid[i] > grid[i - 1])) throw ArgumentError("grid must be strictly increasing");
  }
}

/// C(s, t) = (s^{2H} + t^{2H} - |s - t|^{2H}) / 2.
inline Eigen::MatrixXd fbm_covariance(double hurst, const std::vector<double>& grid) {
  check_hurst(hurst);
  check_grid(grid);
  const auto n = static_cast<Eigen::Index>(grid.size());
  Eigen::MatrixXd c(n, n);
  const double e = 2.0 * hurst;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      const double s = grid[static_cast<std::size_t>(i)];
      const double t = grid[static_cast<std::size_t>(j)];
      c(i, j) = 0.5 * (std::pow(s, e) + std::pow(t, e) - std::pow(std::fabs(s - t), e));
    }
  return c;
}

inline std::size_t point_count(const ProcessModel& model) {
  return std::visit(
      [](const auto& m) -> std::size_t {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, GaussianCov>) return static_cast<std::size_t>(m.cov.rows());
        else if constexpr (std::is_same_v<M, Fbm>) return m.grid.size();
        else return m.coeff_points.size();
      },
      model);
}

struct SamplePath {
  std::vector<double> values;
  std::uint64_t seed = 0;
  std::uint64_t index = 0;
};

/// Square-root factor F with cov = F F^T, from a pivoted LDL^T. Negative
/// pivots down to -1e-9 trace are treated as zero.
inline Eigen::MatrixXd covariance_factor(const Eigen::MatrixXd& cov) {
  if (cov.rows() != cov.cols()) throw DataError("covariance matrix is not square");
  if (!cov.isApprox(cov.transpose(), 1e-12) && cov.norm() > 0.0) throw DataError("covariance matrix is not symmetric");
  const auto n = cov.rows();
  if (n == 0) return cov;
  const double slack = 1e-9 * std::max(cov.trace(), 0.0);
  Eigen::LDLT<Eigen::MatrixXd> ldlt(cov);
  if (ldlt.info() != Eigen::Success) throw NumericError("covariance factorization failed");
  Eigen::VectorXd dvec = ldlt.vectorD();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!std::isfinite(dvec(i)) || dvec(i) < -slack) throw NumericError("covariance matrix is not positive semidefinite");
    dvec(i) = std::sqrt(std::max(dvec(i), 0.0));
  }
  Eigen::MatrixXd l = ldlt.matrixL();
  Eigen::MatrixXd f = l * dvec.asDiagonal();
  // cov = P^T L D L^T P
  return ldlt.transpositionsP().transpose() * f;
}

namespace detail {
inline Eigen::MatrixXd coeff_matrix(const CanonicalTwoDist& m) {
  Eigen::MatrixXd a(static_cast<Eigen::Index>(m.coeff_points.size()), static_cast<Eigen::Index>(m.n_vars));
  for (std::size_t i = 0; i < m.coeff_points.size(); ++i) {
    if (m.coeff_points[i].size() != m.n_vars) throw DataError("coefficient vector has the wrong dimension");
    for (std::size_t k = 0; k < m.n_vars; ++k)
      a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = m.coeff_points[i][k];
  }
  return a;
}

inline double draw_noise(CounterRng& rng, Noise noise) {
  return noise == Noise::Gaussian ? rng.normal() : rng.laplace();
}
}  // namespace detail

/// Precomputed linear map from i.i.d. noise to path values.
class PathSampler {
 public:
  explicit PathSampler(const ProcessModel& model) {
    if (const auto* g = std::get_if<GaussianCov>(&model)) {
      factor_ = covariance_factor(g->cov);
    } else if (const auto* f = std::get_if<Fbm>(&model)) {
      factor_ = covariance_factor(fbm_covariance(f->hurst, f->grid));
    } else {
      const auto& c = std::get<CanonicalTwoDist>(model);
      factor_ = detail::coeff_matrix(c);
      noise_ = c.noise;
    }
  }

  [[nodiscard]] std::size_t points() const noexcept { return static_cast<std::size_t>(factor_.rows()); }

  [[nodiscard]] SamplePath sample(std::uint64_t seed, std::uint64_t index) const {
    CounterRng rng = CounterRng(seed).substream(index);
    Eigen::VectorXd xi(factor_.cols());
    for (Eigen::Index k = 0; k < xi.size(); ++k) xi(k) = detail::draw_noise(rng, noise_);
    const Eigen::VectorXd x = factor_ * xi;
    return {std::vector<double>(x.data(), x.data() + x.size()), seed, index};
  }

 private:
  Eigen::MatrixXd factor_;
  Noise noise_ = Noise::Gaussian;
};

/// Paths 0..count-1; path i depends only on (seed, i).
inline std::vector<SamplePath> sample_paths(const ProcessModel& model, std::size_t count, std::uint64_t seed,
                                            unsigned threads = 1) {
  if (count < 1) throw ArgumentError("sample_paths: count must be at least 1");
  const PathSampler sampler(model);
  std::vector<SamplePath> out(count);
  parallel_for(count, threads, [&](std::size_t i) { out[i] = sampler.sample(seed, i); });
  return out;
}

// ---------------------------------------------------------------------------
// Increment distances

struct CanonicalCalibration {
  double c1 = 0.0;  // d1 = c1 |s - t|_2, gauge phi_2
  double c2 = 0.0;  // d2 = c2 |s - t|_inf, gauge phi_1
  double max_two_gauge_mean = 0.0;  // max over pairs of the sample mean in the increment condition
  std::size_t draws = 0;
  double safety = 1.05;
};

/// Measures the Orlicz norms of normalized increments on shared noise draws
/// and scales them by `safety`.
inline CanonicalCalibration calibrate_canonical(const CanonicalTwoDist& model, std::size_t draws, std::uint64_t seed,
                                                double safety = 1.05) {
  if (draws < 1) throw ArgumentError("calibration needs at least one draw");
  const Eigen::MatrixXd a = detail::coeff_matrix(model);
  const auto n = static_cast<std::size_t>(a.rows());
  Eigen::MatrixXd xi(a.cols(), static_cast<Eigen::Index>(draws));
  for (std::size_t r = 0; r < draws; ++r) {
    CounterRng rng = CounterRng(seed).substream(r);
    for (Eigen::Index k = 0; k < a.cols(); ++k) xi(k, static_cast<Eigen::Index>(r)) = detail::draw_noise(rng, model.noise);
  }
  const Eigen::MatrixXd values = a * xi;  // points x draws

  const auto phi2 = YoungFunction::phi_p(2.0);
  const auto phi1 = YoungFunction::phi_p(1.0);
  CanonicalCalibration cal;
  cal.draws = draws;
  cal.safety = safety;
  double n1 = 0.0;
  double n2 = 0.0;
  std::vector<double> inc(draws);
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t t = s + 1; t < n; ++t) pairs.emplace_back(s, t);

  auto increments = [&](std::size_t s, std::size_t t) {
    for (std::size_t r = 0; r < draws; ++r)
      inc[r] = values(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(r)) -
               values(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(r));
  };
  auto mean_at = [&](const YoungFunction& psi, double scale) {
    double acc = 0.0;
    for (double v : inc) acc += psi.eval(std::fabs(v) / scale);
    return acc / static_cast<double>(draws);
  };

  for (auto [s, t] : pairs) {
    const Eigen::VectorXd u = a.row(static_cast<Eigen::Index>(t)) - a.row(static_cast<Eigen::Index>(s));
    const double l2 = u.norm();
    const double linf = u.cwiseAbs().maxCoeff();
    if (l2 == 0.0) continue;
    increments(s, t);
    // Only pairs that beat the running maximum need a full bisection.
    if (n1 == 0.0 || mean_at(phi2, n1 * l2) > 1.0) n1 = std::max(n1, orlicz_norm(inc, phi2).value / l2);
    if (n2 == 0.0 || mean_at(phi1, n2 * linf) > 1.0) n2 = std::max(n2, orlicz_norm(inc, phi1).value / linf);
  }
  cal.c1 = safety * n1;
  cal.c2 = safety * n2;

  for (auto [s, t] : pairs) {
    const Eigen::VectorXd u = a.row(static_cast<Eigen::Index>(t)) - a.row(static_cast<Eigen::Index>(s));
    const double d1 = cal.c1 * u.norm();
    const double d2 = cal.c2 * u.cwiseAbs().maxCoeff();
    if (d1 == 0.0) continue;
    increments(s, t);
    double acc = 0.0;
    for (double v : inc) acc += std::min(phi2.eval(std::fabs(v) / d1), phi1.eval(std::fabs(v) / d2));
    cal.max_two_gauge_mean = std::max(cal.max_two_gauge_mean, acc / static_cast<double>(draws));
  }
  return cal;
}

/// Two-distance space of a canonical model for given calibration constants.
inline FiniteMetricSpace canonical_space(const CanonicalTwoDist& model, const CanonicalCalibration& cal) {
  return FiniteMetricSpace::two(euclidean_distances(model.coeff_points, cal.c1),
                                sup_distances(model.coeff_points, cal.c2), 2.0, 1.0);
}

/// Gaussian models: d = sqrt(8/(3 ln 2)) (E|X_t - X_s|^2)^{1/2}, gauge phi_2.
/// Canonical models: calibrated (d1, d2) with exponents (2, 1), base gauge phi_1.
inline FiniteMetricSpace increment_distance(const ProcessModel& model, const YoungFunction& psi,
                                            std::size_t calibration_draws = 100000,
                                            std::uint64_t calibration_seed = 0) {
  if (const auto* f = std::get_if<Fbm>(&model)) {
    if (!(psi == YoungFunction::phi_p(2.0))) throw ArgumentError("Gaussian increment distance is paired with phi_2");
    check_hurst(f->hurst);
    check_grid(f->grid);
    const std::size_t n = f->grid.size();
    DistanceMatrix d(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        d(i, j) = kGaussianDistanceScale * std::pow(std::fabs(f->grid[i] - f->grid[j]), f->hurst);
    return FiniteMetricSpace::one(std::move(d));
  }
  if (const auto* g = std::get_if<GaussianCov>(&model)) {
    if (!(psi == YoungFunction::phi_p(2.0))) throw ArgumentError("Gaussian increment distance is paired with phi_2");
    const auto n = static_cast<std::size_t>(g->cov.rows());
    DistanceMatrix d(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        const auto a = static_cast<Eigen::Index>(i);
        const auto b = static_cast<Eigen::Index>(j);
        const double var = g->cov(a, a) + g->cov(b, b) - 2.0 * g->cov(a, b);
        d(i, j) = d(j, i) = kGaussianDistanceScale * std::sqrt(std::max(var, 0.0));
      }
    return FiniteMetricSpace::one(std::move(d));
  }
  const auto& c = std::get<CanonicalTwoDist>(model);
  if (!(psi == YoungFunction::phi_p(1.0))) throw ArgumentError("canonical two-distance model uses base gauge phi_1");
  return canonical_space(c, calibrate_canonical(c, calibration_draws, calibration_seed));
}

// ---------------------------------------------------------------------------
// Z statistic

enum class ZMode { OneDist, TwoDistMin };

struct ZStatistic {
  double value = 0.0;
  ZMode mode = ZMode::OneDist;
  std::vector<double> per_level;  // per_level[n - 1] is the level-n contribution
};

/// psi(x^p) for a phi_q base, i.e. phi_{q p}.
inline YoungFunction power_gauge(const YoungFunction& base, double p) {
  if (base.kind() != YoungFunction::Kind::PhiP) throw ArgumentError("two-distance gauges need a phi_p base");
  return YoungFunction::phi_p(base.parameter() * p);
}

namespace detail {
inline double gauge_ratio(const YoungFunction& psi, double inc, double d) {
  if (d == 0.0) return inc == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return psi.eval(inc / d);
}
}  // namespace detail

/// Z = sum_{n >= 1} N_n^{-3} sum_{t in T_n} gauge(|X(t) - X(pi_{n-1}(t))| / d(t, pi_{n-1}(t))),
/// where the two-distance gauge is the smaller of the two normalized gauges.
/// Links of zero length contribute 0.
inline ZStatistic compute_Z(std::span<const double> path, const AdmissibleNet& net, ZMode mode) {
  if (path.size() != net.size()) throw DataError("path length does not match the net");
  if (mode == ZMode::TwoDistMin && !net.two_distance()) throw ArgumentError("two-distance Z on a one-distance net");
  const auto& space = net.space();
  const YoungFunction psi = net.psi();
  const YoungFunction psi1 = mode == ZMode::TwoDistMin ? power_gauge(psi, space.p1) : psi;
  const YoungFunction psi2 = mode == ZMode::TwoDistMin ? power_gauge(psi, space.p2) : psi;

  ZStatistic z;
  z.mode = mode;
  for (std::size_t n = 1; n <= net.terminal_level(); ++n) {
    const double budget = net.budget(n);
    double acc = 0.0;
    for (std::size_t t : net.level(n)) {
      const std::size_t parent = net.projection(n - 1, t);
      if (parent == t) continue;
      const double inc = std::fabs(path[t] - path[parent]);
      double term;
      if (mode == ZMode::OneDist) {
        term = detail::gauge_ratio(psi, inc, space.d1(t, parent));
      } else {
        term = std::min(detail::gauge_ratio(psi1, inc, space.d1(t, parent)),
                        detail::gauge_ratio(psi2, inc, (*space.d2)(t, parent)));
      }
      acc += term;
    }
    const double contrib = acc / (budget * budget * budget);
    z.per_level.push_back(contrib);
    z.value += contrib;
  }
  return z;
}

// ---------------------------------------------------------------------------
// Pathwise certificates

enum class Proposition { P1, P2, P3, P4 };

inline const char* proposition_name(Proposition p) {
  switch (p) {
    case Proposition::P1: return "P1";
    case Proposition::P2: return "P2";
    case Proposition::P3: return "P3";
    case Proposition::P4: return "P4";
  }
  return "?";
}

struct CertificateConstants {
  double A = 0.0;
  double B = 0.0;
  double K = 1.0;
  double p = 1.0;
};

/// Constants the proofs deliver. For the pair bound with two distances the
/// proof's closing value 6(1 + 2^{1+p}) K^2 is used for A.
inline CertificateConstants default_constants(Proposition which, double K, double p = 1.0) {
  const double k2 = K * K;
  switch (which) {
    case Proposition::P1: return {15.0 * k2, 4.0 * k2, K, p};
    case Proposition::P2: return {30.0 * k2, 10.0 * k2, K, p};
    case Proposition::P3: return {3.0 * (1.0 + std::exp2(1.0 + p)) * k2, 2.0 * k2, K, p};
    case Proposition::P4: return {6.0 * (1.0 + std::exp2(1.0 + p)) * k2, 5.0 * k2, K, p};
  }
  return {};
}

/// Deterministic parts of a certificate: for each point (P1, P3) or pair
/// (P2, P4), the two endpoints, the deterministic right-hand side term and
/// the weights multiplying the inverse gauges of Z.
struct CertificatePlan {
  Proposition which = Proposition::P1;
  std::size_t m = 0;
  struct Item {
    std::size_t a = 0;
    std::size_t b = 0;
    double deterministic = 0.0;  // sigma_m, tau, sigma^1 + sigma^2, or tau_bar
    double w1 = 0.0;             // multiplies psi^{-1}(Z) or psi_1^{-1}(Z)
    double w2 = 0.0;             // multiplies psi_2^{-1}(Z)
  };
  std::vector<Item> items;
  YoungFunction inv1 = YoungFunction::phi_p(2.0);
  YoungFunction inv2 = YoungFunction::phi_p(2.0);
};

inline CertificatePlan make_plan(const AdmissibleNet& net, Proposition which, std::size_t m = 0) {
  const bool two = which == Proposition::P3 || which == Proposition::P4;
  if (two != net.two_distance()) throw ArgumentError("proposition does not match the number of distances");
  CertificatePlan plan;
  plan.which = which;
  plan.m = m;
  const std::size_t n = net.size();
  if (two) {
    plan.inv1 = power_gauge(net.psi(), net.space().p1);
    plan.inv2 = power_gauge(net.psi(), net.space().p2);
  } else {
    plan.inv1 = plan.inv2 = net.psi();
  }
  switch (which) {
    case Proposition::P1:
      for (std::size_t t = 0; t < n; ++t)
        plan.items.push_back({t, net.projection(m, t), sigma(net, t, m), net.dist(m, t), 0.0});
      break;
    case Proposition::P2:
      for (std::size_t s = 0; s < n; ++s)
        for (std::size_t t = s + 1; t < n; ++t)
          plan.items.push_back({s, t, tau(net, s, t), net.space().d1(s, t), 0.0});
      break;
    case Proposition::P3:
      for (std::size_t t = 0; t < n; ++t) {
        const auto seq = two_chain_seq(net, t, m);
        plan.items.push_back({t, net.projection(m, t), two_sigma(net, t, m, 1) + two_sigma(net, t, m, 2),
                              seq.dbar[0], seq.dbar[1]});
      }
      break;
    case Proposition::P4:
      for (std::size_t s = 0; s < n; ++s)
        for (std::size_t t = s + 1; t < n; ++t) {
          const auto r = two_modulus(net, s, t);
          plan.items.push_back({s, t, r.tau_bar, r.dbar[0], r.dbar[1]});
        }
      break;
  }
  return plan;
}

struct CertificateReport {
  Proposition which = Proposition::P1;
  double worst_ratio = 0.0;
  bool pass = true;
  CertificateConstants constants;
  std::size_t worst_a = 0;
  std::size_t worst_b = 0;
};

/// Relative slack for the zero right-hand side convention.
inline constexpr double kZeroRhsSlack = 1e-9;

/// Evaluates |X(a) - X(b)| against A * deterministic + B * (w1 psi_1^{-1}(Z) + w2 psi_2^{-1}(Z))
/// for every item and reports the worst ratio.
inline CertificateReport verify_certificate(std::span<const double> path, const CertificatePlan& plan, double z,
                                            const CertificateConstants& c) {
  CertificateReport rep;
  rep.which = plan.which;
  rep.constants = c;
  const double g1 = plan.inv1.inverse(z);
  const double g2 = plan.inv2.inverse(z);
  double scale = 1.0;
  for (double v : path) scale = std::max(scale, std::fabs(v));
  for (const auto& it : plan.items) {
    if (it.a >= path.size() || it.b >= path.size()) throw DataError("path length does not match the plan");
    const double lhs = std::fabs(path[it.a] - path[it.b]);
    const double rhs = c.A * it.deterministic + c.B * (it.w1 * g1 + it.w2 * g2);
    double ratio;
    if (rhs > 0.0) ratio = lhs / rhs;
    else ratio = lhs <= kZeroRhsSlack * scale ? 0.0 : std::numeric_limits<double>::infinity();
    if (ratio > rep.worst_ratio) {
      rep.worst_ratio = ratio;
      rep.worst_a = it.a;
      rep.worst_b = it.b;
    }
  }
  rep.pass = rep.worst_ratio <= 1.0;
  return rep;
}

/// Convenience overload building the plan on the fly.
inline CertificateReport verify_certificate(std::span<const double> path, const AdmissibleNet& net, Proposition which,
                                            std::size_t m, const CertificateConstants& c) {
  const auto plan = make_plan(net, which, m);
  const ZMode mode = net.two_distance() ? ZMode::TwoDistMin : ZMode::OneDist;
  return verify_certificate(path, plan, compute_Z(path, net, mode).value, c);
}

// ---------------------------------------------------------------------------
// FBM modulus profile on explicit uniform nets

struct ModulusProfileRow {
  double s = 0.0;
  double t = 0.0;
  double dist = 0.0;
  double tau = 0.0;
  double ratio = 0.0;
};

/// Grid {i / (G - 1) : i = 0..G-1} with d = |s - t|^H and levels
/// T_n = {k / N_n : k = 1..N_n}, capped at the full grid once N_n does not
/// divide G - 1. Ratio is tau / (|s - t|^H sqrt(log2(1 + |s - t|^{-H}))).
inline std::vector<ModulusProfileRow> fbm_modulus_profile(double hurst, std::size_t grid_size = 256) {
  check_hurst(hurst);
  if (grid_size < 2) throw ArgumentError("profile grid needs at least two points");
  const std::size_t steps = grid_size - 1;
  std::vector<double> grid(grid_size);
  for (std::size_t i = 0; i < grid_size; ++i) grid[i] = static_cast<double>(i) / static_cast<double>(steps);
  DistanceMatrix d(grid_size);
  for (std::size_t i = 0; i < grid_size; ++i)
    for (std::size_t j = 0; j < grid_size; ++j) d(i, j) = std::pow(std::fabs(grid[i] - grid[j]), hurst);
  auto space = std::make_shared<const FiniteMetricSpace>(FiniteMetricSpace::one(std::move(d)));

  const auto psi = YoungFunction::phi_p(2.0);
  std::vector<std::vector<std::size_t>> levels;
  for (std::size_t n = 0;; ++n) {
    const double budget = level_budget(psi, n);
    std::vector<std::size_t> lvl;
    if (budget < static_cast<double>(grid_size) && steps % static_cast<std::size_t>(budget) == 0) {
      const auto b = static_cast<std::size_t>(budget);
      for (std::size_t k = 1; k <= b; ++k) lvl.push_back(k * (steps / b));
      if (!levels.empty())
        for (std::size_t t : levels.back())
          if (std::find(lvl.begin(), lvl.end(), t) == lvl.end()) throw ArgumentError("uniform levels are not nested");
      levels.push_back(std::move(lvl));
    } else {
      for (std::size_t i = 0; i < grid_size; ++i) lvl.push_back(i);
      levels.push_back(std::move(lvl));
      break;
    }
  }
  const auto net = AdmissibleNet::from_levels(space, psi, levels);

  std::vector<ModulusProfileRow> rows;
  rows.reserve(grid_size * steps / 2);
  for (std::size_t i = 0; i < grid_size; ++i)
    for (std::size_t j = i + 1; j < grid_size; ++j) {
      const double dist = space->d1(i, j);
      const double tv = tau(net, i, j);
      const double envelope = dist * std::sqrt(std::log2(1.0 + 1.0 / dist));
      rows.push_back({grid[i], grid[j], dist, tv, tv / envelope});
    }
  return rows;
}

}  // namespace gchain
