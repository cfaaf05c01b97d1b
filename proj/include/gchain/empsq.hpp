#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <numbers>
#include <string>
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

enum class LawKind { GaussianIso, Rademacher };

struct SampleLaw {
  LawKind kind = LawKind::GaussianIso;
  std::size_t dim = 1;
};

/// N draws of the sample law, one per row.
struct SampleBatch {
  Eigen::MatrixXd draws;
  SampleLaw law;
  std::uint64_t seed = 0;
  std::uint64_t rep = 0;

  [[nodiscard]] std::size_t size() const noexcept { return static_cast<std::size_t>(draws.rows()); }
};

inline SampleBatch draw_batch(const SampleLaw& law, std::size_t n, std::uint64_t seed, std::uint64_t rep = 0) {
  if (n < 1) throw ArgumentError("sample batch needs N >= 1");
  if (law.dim < 1) throw ArgumentError("sample law needs dim >= 1");
  SampleBatch b{Eigen::MatrixXd(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(law.dim)), law, seed, rep};
  CounterRng rng(seed, rep);
  for (Eigen::Index i = 0; i < b.draws.rows(); ++i)
    for (Eigen::Index k = 0; k < b.draws.cols(); ++k)
      b.draws(i, k) = law.kind == LawKind::GaussianIso ? rng.normal() : rng.rademacher();
  return b;
}

/// Linear functionals f(x) = <f, x> with d(f, g) = scale * |f - g|_2.
/// Both supported laws are isotropic, so E f^2 = |f|^2 exactly.
struct FunctionClass {
  Eigen::MatrixXd functions;  // one function per row
  double scale = 1.0;
  DistanceMatrix dist;
  double alpha = 0.0;
  std::vector<double> second_moments;

  [[nodiscard]] std::size_t size() const noexcept { return static_cast<std::size_t>(functions.rows()); }
  [[nodiscard]] std::size_t dim() const noexcept { return static_cast<std::size_t>(functions.cols()); }

  static FunctionClass make(Eigen::MatrixXd fns, double scale) {
    if (!(scale > 0.0)) throw ArgumentError("function class scale must be positive");
    if (fns.rows() < 1) throw ArgumentError("function class is empty");
    FunctionClass c;
    c.functions = std::move(fns);
    c.scale = scale;
    const auto n = c.size();
    c.dist = DistanceMatrix(n);
    c.second_moments.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto fi = c.functions.row(static_cast<Eigen::Index>(i));
      c.second_moments[i] = fi.squaredNorm();
      c.alpha = std::max(c.alpha, scale * fi.norm());
      for (std::size_t j = i + 1; j < n; ++j)
        c.dist(i, j) = c.dist(j, i) = scale * (fi - c.functions.row(static_cast<Eigen::Index>(j))).norm();
    }
    return c;
  }

  [[nodiscard]] FiniteMetricSpace space() const { return FiniteMetricSpace::one(dist); }
};

/// `count` independent uniformly random unit vectors in R^dim.
inline Eigen::MatrixXd random_unit_vectors(std::size_t count, std::size_t dim, std::uint64_t seed) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < count; ++i) {
    CounterRng rng = CounterRng(seed).substream(i);
    double norm = 0.0;
    while (norm == 0.0) {
      for (std::size_t k = 0; k < dim; ++k) out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rng.normal();
      norm = out.row(static_cast<Eigen::Index>(i)).norm();
    }
    out.row(static_cast<Eigen::Index>(i)) /= norm;
  }
  return out;
}

/// Largest empirical phi_2 norm of <u, X> / |u|_2 over the given directions,
/// on `draws` shared samples, times `safety`.
inline double calibrate_scale(const Eigen::MatrixXd& directions, const SampleLaw& law, std::size_t draws,
                              std::uint64_t seed, double safety = 1.05) {
  if (directions.cols() != static_cast<Eigen::Index>(law.dim)) throw DataError("direction dimension mismatch");
  const auto batch = draw_batch(law, draws, seed, 0);
  const auto phi2 = YoungFunction::phi_p(2.0);
  double worst = 0.0;
  std::vector<double> proj(draws);
  for (Eigen::Index r = 0; r < directions.rows(); ++r) {
    const double len = directions.row(r).norm();
    if (len == 0.0) continue;
    const Eigen::VectorXd v = batch.draws * (directions.row(r).transpose() / len);
    std::copy(v.data(), v.data() + v.size(), proj.begin());
    worst = std::max(worst, orlicz_norm(proj, phi2).value);
  }
  return safety * worst;
}

/// k_0 with 2^{2 k_0} <= N < 2^{2(k_0 + 1)}.
inline std::size_t k0_level(std::size_t n) {
  if (n < 1) throw ArgumentError("k0_level: N must be at least 1");
  std::size_t k = 0;
  while ((n >> (2 * (k + 1))) != 0) ++k;
  return k;
}

/// Values <f, X_i> for every function (columns) and draw (rows).
inline Eigen::MatrixXd evaluate(const FunctionClass& cls, const SampleBatch& batch) {
  if (batch.draws.cols() != cls.functions.cols()) throw DataError("sample dimension does not match the class");
  return batch.draws * cls.functions.transpose();
}

/// S_N(f) = (1/N) sum_i (f^2 - E f^2)(X_i) per function.
inline std::vector<double> s_n_process(const FunctionClass& cls, const SampleBatch& batch) {
  const Eigen::MatrixXd v = evaluate(cls, batch);
  const double n = static_cast<double>(batch.size());
  std::vector<double> out(cls.size());
  for (std::size_t f = 0; f < cls.size(); ++f)
    out[f] = v.col(static_cast<Eigen::Index>(f)).squaredNorm() / n - cls.second_moments[f];
  return out;
}

struct PqrTerm {
  double p = 0.0;
  double q = 0.0;
  double r = 0.0;
  double ep = 0.0;
  double eq = 0.0;
  double er = 0.0;
  double s = 0.0;
  double identity_error = 0.0;  // |S - (P + Q + R - EP - EQ - ER)| relative to max(1, |P| + |Q| + |R|)
  bool cauchy_schwarz = true;   // |Q| <= 2 sqrt(P R)
};

/// Split f = (f - pi_{k0} f) + pi_{k0} f into the P, Q, R averages and their expectations.
inline std::vector<PqrTerm> pqr_decompose(const FunctionClass& cls, const SampleBatch& batch, const AdmissibleNet& net) {
  if (net.size() != cls.size()) throw DataError("net does not match the function class");
  const Eigen::MatrixXd v = evaluate(cls, batch);
  const double n = static_cast<double>(batch.size());
  const std::size_t k0 = k0_level(batch.size());
  std::vector<PqrTerm> out(cls.size());
  for (std::size_t f = 0; f < cls.size(); ++f) {
    const std::size_t pi = net.projection(k0, f);
    const auto vf = v.col(static_cast<Eigen::Index>(f));
    const auto vp = v.col(static_cast<Eigen::Index>(pi));
    const Eigen::VectorXd diff = vf - vp;
    PqrTerm t;
    t.p = diff.squaredNorm() / n;
    t.q = 2.0 * diff.dot(vp) / n;
    t.r = vp.squaredNorm() / n;
    const Eigen::RowVectorXd gf = cls.functions.row(static_cast<Eigen::Index>(f));
    const Eigen::RowVectorXd gp = cls.functions.row(static_cast<Eigen::Index>(pi));
    t.ep = (gf - gp).squaredNorm();
    t.eq = 2.0 * (gf - gp).dot(gp);
    t.er = gp.squaredNorm();
    t.s = vf.squaredNorm() / n - cls.second_moments[f];
    const double recon = t.p + t.q + t.r - t.ep - t.eq - t.er;
    t.identity_error = std::fabs(t.s - recon) / std::max(1.0, std::fabs(t.p) + std::fabs(t.q) + std::fabs(t.r));
    t.cauchy_schwarz = std::fabs(t.q) <= 2.0 * std::sqrt(t.p * t.r) * (1.0 + 1e-12) + 1e-300;
    out[f] = t;
  }
  return out;
}

/// A(gamma^2 / N + alpha gamma / sqrt(N)) + B alpha^2 phi^{-1}(z) / sqrt(N), phi = Bernstein(N).
inline double square_bound(double gamma2, double alpha, std::size_t n, double a, double b, double z) {
  if (n < 1) throw ArgumentError("square_bound: N must be at least 1");
  if (gamma2 < 0.0 || alpha < 0.0 || a < 0.0 || b < 0.0 || z < 0.0)
    throw ArgumentError("square_bound: inputs must be nonnegative");
  const double nn = static_cast<double>(n);
  const double root = std::sqrt(nn);
  const auto phi = YoungFunction::bernstein(nn);
  return a * (gamma2 * gamma2 / nn + alpha * gamma2 / root) + b * alpha * alpha * phi.inverse(z) / root;
}

struct SquareBoundConstants {
  double K = 1.0;
  double C = 1.0;
  double A = 0.0;
  double B = 0.0;

  /// A = 30^2 (K + C), B = 6 * 24^2 max(C^2, K^2).
  static SquareBoundConstants closing(double k, double c) {
    return {k, c, 900.0 * (k + c), 3456.0 * std::max(c * c, k * k)};
  }
};

struct ZParts {
  double z1 = 0.0;
  double z2 = 0.0;
  double z3 = 0.0;
  [[nodiscard]] double combined() const noexcept { return 0.5 * z1 + 0.25 * z2 + 0.25 * z3; }
};

inline constexpr std::size_t kMaxPairClass = 256;

/// Z_1, Z_2, Z_3 for one batch. Both pair statistics run over all ordered
/// pairs of each level F_k, k >= 1, with normalizations
///   Z_1: |sum_i ((g - h)^2 - E (g - h)^2)(X_i)| / (K^2 sqrt(N) d(g, h)^2)
///   Z_2: |sum_i (g^2 - h^2 - E g^2 + E h^2)(X_i)| / (2 K^2 sqrt(N) alpha d(g, h))
/// and Z_3 uses the single point of F_0.
inline ZParts compute_z_parts(const FunctionClass& cls, const SampleBatch& batch, const AdmissibleNet& net,
                              double k) {
  if (cls.size() > kMaxPairClass)
    throw SizeError("function class larger than 256: pair statistics are quadratic, shrink the class");
  const Eigen::MatrixXd v = evaluate(cls, batch);
  const auto nn = static_cast<double>(batch.size());
  const double root = std::sqrt(nn);
  const auto phi = YoungFunction::bernstein(nn);
  const double k2 = k * k;

  std::vector<double> centered_sq(cls.size());
  for (std::size_t f = 0; f < cls.size(); ++f)
    centered_sq[f] = v.col(static_cast<Eigen::Index>(f)).squaredNorm() - nn * cls.second_moments[f];

  ZParts z;
  for (std::size_t lvl = 1; lvl <= net.terminal_level(); ++lvl) {
    const double budget = net.budget(lvl);
    const double cube = budget * budget * budget;
    const auto members = net.level(lvl);
    double u = 0.0;
    double w = 0.0;
    for (std::size_t g : members)
      for (std::size_t h : members) {
        const double d = cls.dist(g, h);
        if (g == h || d == 0.0) continue;
        const Eigen::RowVectorXd diff = cls.functions.row(static_cast<Eigen::Index>(g)) -
                                        cls.functions.row(static_cast<Eigen::Index>(h));
        const double sum1 =
            (v.col(static_cast<Eigen::Index>(g)) - v.col(static_cast<Eigen::Index>(h))).squaredNorm() -
            nn * diff.squaredNorm();
        u += phi.eval(std::fabs(sum1) / (k2 * root * d * d));
        if (cls.alpha > 0.0) {
          const double sum2 = centered_sq[g] - centered_sq[h];
          w += phi.eval(std::fabs(sum2) / (2.0 * k2 * root * cls.alpha * d));
        }
      }
    z.z1 += u / cube;
    z.z2 += w / cube;
  }
  const std::size_t base = net.level(0)[0];
  if (cls.alpha > 0.0) z.z3 = phi.eval(std::fabs(centered_sq[base]) / (k2 * root * cls.alpha * cls.alpha));
  return z;
}

struct SquareProcessReport {
  std::uint64_t rep = 0;
  double sup_value = 0.0;
  std::vector<double> s_values;
  std::vector<PqrTerm> decomposition;
  ZParts z;
  double z_value = 0.0;
  double gamma2 = 0.0;
  double bound_value = 0.0;
  bool pass = true;
  double max_identity_error = 0.0;
  bool cauchy_schwarz = true;
  double a_hat = 0.0;  // A that makes the bound tight with B = 0
  double b_hat = 0.0;  // B that makes the bound tight with A = 0
};

/// One report per seeded batch; batch r uses stream (seed, r).
inline std::vector<SquareProcessReport> verify_square_bound(const FunctionClass& cls, const SampleLaw& law, std::size_t n,
                                                    std::size_t reps, std::uint64_t seed, const SquareBoundConstants& c,
                                                    unsigned threads = 1) {
  if (law.dim != cls.dim()) throw DataError("sample law dimension does not match the class");
  if (cls.size() > kMaxPairClass)
    throw SizeError("function class larger than 256: pair statistics are quadratic, shrink the class");
  const auto space = cls.space();
  const auto net = build_net(space, YoungFunction::phi_p(2.0));
  const double gamma = gamma2_upper(net);
  const double nn = static_cast<double>(n);
  const auto phi = YoungFunction::bernstein(nn);

  std::vector<SquareProcessReport> out(reps);
  parallel_for(reps, threads, [&](std::size_t r) {
    const auto batch = draw_batch(law, n, seed, r);
    SquareProcessReport rep;
    rep.rep = r;
    rep.s_values = s_n_process(cls, batch);
    rep.sup_value = *std::max_element(rep.s_values.begin(), rep.s_values.end());
    rep.decomposition = pqr_decompose(cls, batch, net);
    for (const auto& t : rep.decomposition) {
      rep.max_identity_error = std::max(rep.max_identity_error, t.identity_error);
      rep.cauchy_schwarz = rep.cauchy_schwarz && t.cauchy_schwarz;
    }
    rep.z = compute_z_parts(cls, batch, net, c.K);
    rep.z_value = rep.z.combined();
    rep.gamma2 = gamma;
    rep.bound_value = square_bound(gamma, cls.alpha, n, c.A, c.B, rep.z_value);
    rep.pass = rep.sup_value <= rep.bound_value;
    const double det = gamma * gamma / nn + cls.alpha * gamma / std::sqrt(nn);
    const double rnd = cls.alpha * cls.alpha * phi.inverse(rep.z_value) / std::sqrt(nn);
    const double sup_pos = std::max(rep.sup_value, 0.0);
    rep.a_hat = det > 0.0 ? sup_pos / det : 0.0;
    rep.b_hat = rnd > 0.0 ? sup_pos / rnd : 0.0;
    out[r] = std::move(rep);
  });
  return out;
}

struct TailRow {
  double u = 0.0;
  double empirical = 0.0;
  double bound = 0.0;
};

/// Tail of sup_f S_N(f) above the deterministic part plus B alpha^2 u / sqrt(N),
/// against exp(-min(sqrt(N) u, u^2)).
inline std::vector<TailRow> square_bound_tail(const std::vector<SquareProcessReport>& reps, const FunctionClass& cls,
                                      std::size_t n, const SquareBoundConstants& c, const std::vector<double>& u_grid) {
  std::vector<TailRow> rows;
  if (reps.empty()) return rows;
  const double nn = static_cast<double>(n);
  const double gamma = reps.front().gamma2;
  const double det = c.A * (gamma * gamma / nn + cls.alpha * gamma / std::sqrt(nn));
  for (double u : u_grid) {
    const double level = det + c.B * cls.alpha * cls.alpha * u / std::sqrt(nn);
    std::size_t hits = 0;
    for (const auto& r : reps) hits += r.sup_value > level ? 1 : 0;
    rows.push_back({u, static_cast<double>(hits) / static_cast<double>(reps.size()),
                    std::exp(-std::min(std::sqrt(nn) * u, u * u))});
  }
  return rows;
}

/// Monte Carlo P(|S_N(f - g)| >= u) for a pair at calibrated distance
/// `d_value` against 2 exp(-N min(u^2 / (4 d^4), u / (4 d^2))), on an
/// evenly spaced grid of `points` values starting at 0.
inline std::vector<TailRow> bernstein_pair_tail(double d_value, std::size_t n, const SampleLaw& law, std::size_t trials,
                                                std::uint64_t seed, double scale, std::size_t points = 20) {
  if (!(d_value > 0.0)) throw ArgumentError("pair distance must be positive");
  if (trials < 1 || n < 1 || points < 2) throw ArgumentError("pair tail needs trials, N >= 1 and two grid points");
  // The pair difference points along the diagonal, with |u|_2 = d / scale.
  const double len = d_value / scale;
  const Eigen::VectorXd dir = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(law.dim),
                                                        len / std::sqrt(static_cast<double>(law.dim)));
  const double second = len * len;
  std::vector<double> stat(trials);
  for (std::size_t r = 0; r < trials; ++r) {
    const auto batch = draw_batch(law, n, seed, r);
    const Eigen::VectorXd proj = batch.draws * dir;
    stat[r] = std::fabs(proj.squaredNorm() / static_cast<double>(n) - second);
  }
  std::sort(stat.begin(), stat.end());
  const double d2 = d_value * d_value;
  // The grid spans eight standard deviations of the pair statistic, where
  // both columns are informative; past that the empirical tail is zero.
  const double u_max = 8.0 * d2 / std::sqrt(static_cast<double>(n));
  std::vector<TailRow> rows;
  for (std::size_t i = 0; i < points; ++i) {
    const double u = static_cast<double>(i) * u_max / static_cast<double>(points - 1);
    const auto first = std::lower_bound(stat.begin(), stat.end(), u);
    const double emp = static_cast<double>(stat.end() - first) / static_cast<double>(trials);
    const double bound =
        2.0 * std::exp(-static_cast<double>(n) * std::min(u * u / (4.0 * d2 * d2), u / (4.0 * d2)));
    rows.push_back({u, emp, bound});
  }
  return rows;
}

struct EmpiricalCalibration {
  double K = 1.0;
  double C = 1.0;
  double K_raw = 0.0;
  double C_raw = 0.0;
};

inline double round_up_2dp(double x) { return std::ceil(x * 100.0 - 1e-9) / 100.0; }
inline double round_down_2dp(double x) { return std::floor(x * 100.0 + 1e-9) / 100.0; }

/// Measures the constants of the increment conditions on a class:
///   C = max |<f - g, X>|_{phi_2} / d(f, g)
///   K^2 = max of the phi-norms (phi = Bernstein(N)) of sqrt(N) S_N(f - g) / d(f, g)^2,
///         sqrt(N) S_N(f) / d(f, 0)^2 and sqrt(N) (S_N(f) - S_N(g)) / ((d(f,0) + d(g,0)) d(f, g)),
/// each over `reps` batches. K is at least 1; both are rounded up to two decimals.
inline EmpiricalCalibration calibrate_empirical(const FunctionClass& cls, const SampleLaw& law, std::size_t n,
                                                std::size_t reps, std::uint64_t seed) {
  if (reps < 2) throw ArgumentError("calibration needs at least two batches");
  const auto phi = YoungFunction::bernstein(static_cast<double>(n));
  const auto phi2 = YoungFunction::phi_p(2.0);
  const std::size_t m = cls.size();
  const double root = std::sqrt(static_cast<double>(n));

  // C from single draws: <f - g, X> over reps * n shared samples.
  const auto pooled = draw_batch(law, reps * n, seed, 1u << 20);
  const Eigen::MatrixXd pv = pooled.draws * cls.functions.transpose();
  std::vector<double> buf(static_cast<std::size_t>(pv.rows()));
  double c_raw = 0.0;
  auto norm_exceeds = [](const std::vector<double>& xs, const YoungFunction& psi, double level) {
    double acc = 0.0;
    for (double x : xs) acc += psi.eval(std::fabs(x) / level);
    return acc / static_cast<double>(xs.size()) > 1.0;
  };
  for (std::size_t f = 0; f < m; ++f)
    for (std::size_t g = f + 1; g < m; ++g) {
      const double d = cls.dist(f, g);
      if (d == 0.0) continue;
      for (Eigen::Index i = 0; i < pv.rows(); ++i)
        buf[static_cast<std::size_t>(i)] = (pv(i, static_cast<Eigen::Index>(f)) - pv(i, static_cast<Eigen::Index>(g))) / d;
      if (c_raw == 0.0 || norm_exceeds(buf, phi2, c_raw)) c_raw = std::max(c_raw, orlicz_norm(buf, phi2).value);
    }

  // K from per-batch square processes.
  Eigen::MatrixXd sq(static_cast<Eigen::Index>(reps), static_cast<Eigen::Index>(m));
  std::vector<Eigen::MatrixXd> values(reps);
  for (std::size_t r = 0; r < reps; ++r) {
    const auto batch = draw_batch(law, n, seed, r);
    values[r] = evaluate(cls, batch);
    for (std::size_t f = 0; f < m; ++f)
      sq(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(f)) =
          values[r].col(static_cast<Eigen::Index>(f)).squaredNorm() / static_cast<double>(n) - cls.second_moments[f];
  }
  double k2 = 0.0;
  std::vector<double> ys(reps);
  auto absorb = [&]() {
    if (k2 == 0.0 || norm_exceeds(ys, phi, k2)) k2 = std::max(k2, orlicz_norm(ys, phi).value);
  };
  for (std::size_t f = 0; f < m; ++f) {
    const double d0 = cls.scale * std::sqrt(cls.second_moments[f]);
    if (d0 == 0.0) continue;
    for (std::size_t r = 0; r < reps; ++r) ys[r] = root * sq(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(f)) / (d0 * d0);
    absorb();
  }
  for (std::size_t f = 0; f < m; ++f)
    for (std::size_t g = f + 1; g < m; ++g) {
      const double d = cls.dist(f, g);
      if (d == 0.0) continue;
      const Eigen::RowVectorXd diff = cls.functions.row(static_cast<Eigen::Index>(f)) - cls.functions.row(static_cast<Eigen::Index>(g));
      const double e2 = diff.squaredNorm();
      for (std::size_t r = 0; r < reps; ++r) {
        const double s = (values[r].col(static_cast<Eigen::Index>(f)) - values[r].col(static_cast<Eigen::Index>(g))).squaredNorm() /
                             static_cast<double>(n) - e2;
        ys[r] = root * s / (d * d);
      }
      absorb();
      const double df = cls.scale * std::sqrt(cls.second_moments[f]);
      const double dg = cls.scale * std::sqrt(cls.second_moments[g]);
      for (std::size_t r = 0; r < reps; ++r)
        ys[r] = root * (sq(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(f)) - sq(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(g))) /
                ((df + dg) * d);
      absorb();
    }
  EmpiricalCalibration out;
  out.C_raw = c_raw;
  out.K_raw = std::sqrt(k2);
  out.C = round_up_2dp(c_raw);
  out.K = std::max(1.0, round_up_2dp(out.K_raw));
  return out;
}

/// `class_size` random unit functionals in R^dim with the calibrated scale.
inline FunctionClass random_unit_class(std::size_t dim, std::size_t class_size, std::uint64_t class_seed,
                                       const SampleLaw& law, std::size_t scale_draws = 20000) {
  Eigen::MatrixXd fns = random_unit_vectors(class_size, dim, class_seed);
  const double scale = calibrate_scale(fns, law, scale_draws, class_seed ^ 0x5ca1eULL);
  return FunctionClass::make(std::move(fns), scale);
}

}  // namespace gchain
