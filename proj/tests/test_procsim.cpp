#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "catch_amalgamated.hpp"

#include "gchain/procsim.hpp"

using namespace gchain;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

const YoungFunction kPhi2 = YoungFunction::phi_p(2.0);

double variance(const std::vector<double>& xs) {
  double m = 0.0;
  for (double x : xs) m += x;
  m /= static_cast<double>(xs.size());
  double v = 0.0;
  for (double x : xs) v += (x - m) * (x - m);
  return v / static_cast<double>(xs.size() - 1);
}

// Projection onto T_n straight from the level set: nearest point, the point
// itself on ties, otherwise the lowest index.
std::size_t parent_of(const AdmissibleNet& net, std::size_t n, std::size_t t) {
  std::size_t best = std::numeric_limits<std::size_t>::max();
  double bd = std::numeric_limits<double>::infinity();
  for (std::size_t u : net.level(n)) {
    const double d = net.build_distance(t, u);
    if (d < bd || (d == bd && (u == t || (best != t && u < best)))) {
      bd = d;
      best = u;
    }
  }
  return best;
}

double z_oracle(const std::vector<double>& x, const AdmissibleNet& net) {
  double z = 0.0;
  for (std::size_t n = 1; n <= net.terminal_level(); ++n) {
    const double nn = std::floor(std::exp2(std::pow(std::exp2(static_cast<double>(n)), 2.0)) - 1.0);
    double acc = 0.0;
    for (std::size_t t : net.level(n)) {
      const std::size_t u = parent_of(net, n - 1, t);
      if (u == t) continue;
      const double r = std::fabs(x[t] - x[u]) / net.space().d1(t, u);
      acc += std::exp2(r * r) - 1.0;
    }
    z += acc / (nn * nn * nn);
  }
  return z;
}

GaussianCov random_covariance(std::size_t n, std::uint64_t seed) {
  CounterRng rng(seed);
  Eigen::MatrixXd b(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < b.rows(); ++i)
    for (Eigen::Index j = 0; j < b.cols(); ++j) b(i, j) = rng.normal();
  return {b * b.transpose() / static_cast<double>(n)};
}

}  // namespace

TEST_CASE("fbm covariance", "[procsim]") {
  const auto grid = uniform_grid(10);
  const auto bm = fbm_covariance(0.5, grid);
  for (std::size_t i = 0; i < 10; ++i)
    for (std::size_t j = 0; j < 10; ++j)
      CHECK_THAT(bm(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)),
                 WithinAbs(std::min(grid[i], grid[j]), 1e-15));
  for (double h : {0.2, 0.7}) {
    const auto c = fbm_covariance(h, grid);
    for (std::size_t i = 0; i < 10; ++i)
      CHECK_THAT(c(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)), WithinRel(std::pow(grid[i], 2 * h), 1e-14));
  }
  CHECK_THROWS_AS(fbm_covariance(1.0, grid), ArgumentError);
  CHECK_THROWS_AS(fbm_covariance(0.5, {0.5, 0.2}), ArgumentError);
}

TEST_CASE("increment distances of gaussian models", "[procsim]") {
  const Fbm fbm{0.3, uniform_grid(16)};
  const auto space = increment_distance(fbm, kPhi2);
  CHECK_THAT(kGaussianDistanceScale, WithinAbs(1.9614, 1e-4));
  for (std::size_t i = 0; i < 16; ++i) {
    CHECK(space.d1(i, i) == 0.0);
    for (std::size_t j = i + 1; j < 16; ++j)
      CHECK_THAT(space.d1(i, j) / std::pow(std::fabs(fbm.grid[i] - fbm.grid[j]), 0.3),
                 WithinRel(kGaussianDistanceScale, 1e-12));
  }
  // the covariance route agrees with the closed form
  const auto via_cov = increment_distance(GaussianCov{fbm_covariance(0.3, fbm.grid)}, kPhi2);
  for (std::size_t i = 0; i < 16; ++i)
    for (std::size_t j = i + 1; j < 16; ++j) CHECK_THAT(via_cov.d1(i, j), WithinRel(space.d1(i, j), 1e-8));

  const auto pair = increment_distance(GaussianCov{Eigen::MatrixXd::Identity(2, 2)}, kPhi2);
  CHECK_THAT(pair.d1(0, 1), WithinRel(kGaussianDistanceScale * std::sqrt(2.0), 1e-14));
  CHECK_THROWS_AS(increment_distance(fbm, YoungFunction::phi_p(1.0)), ArgumentError);
}

TEST_CASE("path sampling", "[procsim]") {
  const auto zero = sample_paths(GaussianCov{Eigen::MatrixXd::Zero(5, 5)}, 20, 1);
  for (const auto& p : zero)
    for (double v : p.values) CHECK(v == 0.0);

  const Fbm bm{0.5, uniform_grid(8)};
  const auto paths = sample_paths(bm, 10000, 42);
  std::vector<double> last;
  for (const auto& p : paths) last.push_back(p.values.back());
  CHECK_THAT(variance(last), WithinAbs(1.0, 0.05));

  CanonicalTwoDist e1{{{1.0, 0.0, 0.0}}, Noise::Gaussian, 3};
  const auto g = sample_paths(e1, 10000, 9);
  std::vector<double> vals;
  for (const auto& p : g) vals.push_back(p.values[0]);
  CHECK_THAT(variance(vals), WithinAbs(1.0, 0.05));

  // each path depends on (seed, index) only
  const auto again = sample_paths(bm, 50, 42, 4);
  for (std::size_t i = 0; i < 50; ++i) CHECK(again[i].values == paths[i].values);
  CHECK(PathSampler(bm).sample(42, 17).values == paths[17].values);
  CHECK_FALSE(sample_paths(bm, 1, 43)[0].values == paths[0].values);
}

TEST_CASE("covariance factor reproduces the covariance", "[procsim]") {
  for (std::size_t n : {1u, 5u, 30u}) {
    const auto cov = random_covariance(n, n).cov;
    const auto f = covariance_factor(cov);
    CHECK((f * f.transpose() - cov).cwiseAbs().maxCoeff() <= 1e-10);
  }
  // rank-deficient input
  Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(4, 4);
  const auto f = covariance_factor(ones);
  CHECK((f * f.transpose() - ones).cwiseAbs().maxCoeff() <= 1e-12);
  Eigen::MatrixXd bad = Eigen::MatrixXd::Identity(3, 3);
  bad(2, 2) = -1.0;
  CHECK_THROWS_AS(covariance_factor(bad), NumericError);
}

TEST_CASE("Z statistic", "[procsim]") {
  const Fbm bm{0.5, uniform_grid(64)};
  const auto space = increment_distance(bm, kPhi2);
  const auto net = build_net(space, kPhi2);
  const std::vector<double> flat(64, 0.0);
  CHECK(compute_Z(flat, net, ZMode::OneDist).value == 0.0);

  const auto single = build_net(FiniteMetricSpace::one(DistanceMatrix::from_rows({{0.0}})), kPhi2);
  const std::vector<double> one_value{3.0};
  CHECK(compute_Z(one_value, single, ZMode::OneDist).value == 0.0);
  CHECK_THROWS_AS(compute_Z(one_value, net, ZMode::OneDist), DataError);
  CHECK_THROWS_AS(compute_Z(flat, net, ZMode::TwoDistMin), ArgumentError);

  const auto gauss = random_covariance(40, 5);
  const auto gspace = increment_distance(gauss, kPhi2);
  const auto gnet = build_net(gspace, kPhi2);
  for (const auto& p : sample_paths(gauss, 100, 6))
    CHECK_THAT(compute_Z(p.values, gnet, ZMode::OneDist).value, WithinRel(z_oracle(p.values, gnet), 1e-12));
}

TEST_CASE("mean of Z stays below one", "[procsim]") {
  const Fbm bm{0.5, uniform_grid(64)};
  const auto net = build_net(increment_distance(bm, kPhi2), kPhi2);
  std::vector<double> zs;
  for (const auto& p : sample_paths(bm, 2000, 77)) zs.push_back(compute_Z(p.values, net, ZMode::OneDist).value);
  double mean = 0.0;
  for (double z : zs) mean += z;
  mean /= static_cast<double>(zs.size());
  CHECK(mean <= 1.0 + 3.0 * std::sqrt(variance(zs) / static_cast<double>(zs.size())));
}

TEST_CASE("one-distance certificates on fbm paths", "[procsim]") {
  const Fbm bm{0.5, uniform_grid(64)};
  const auto net = build_net(increment_distance(bm, kPhi2), kPhi2);
  const auto c1 = default_constants(Proposition::P1, 1.0);
  const auto c2 = default_constants(Proposition::P2, 1.0);
  CHECK(c1.A == 15.0);
  CHECK(c1.B == 4.0);
  CHECK(c2.A == 30.0);
  CHECK(c2.B == 10.0);
  const auto plan1 = make_plan(net, Proposition::P1, 0);
  const auto plan2 = make_plan(net, Proposition::P2);
  const std::vector<double> flat(64, 0.0);
  CHECK(verify_certificate(flat, plan1, 0.0, c1).worst_ratio == 0.0);
  CHECK(verify_certificate(flat, plan2, 0.0, c2).worst_ratio == 0.0);
  for (const auto& p : sample_paths(bm, 200, 1234)) {
    const double z = compute_Z(p.values, net, ZMode::OneDist).value;
    CHECK(verify_certificate(p.values, plan1, z, c1).pass);
    CHECK(verify_certificate(p.values, plan2, z, c2).pass);
  }
  CHECK_THROWS_AS(make_plan(net, Proposition::P3), ArgumentError);
}

TEST_CASE("certificate ratios follow their definition", "[procsim]") {
  // Build the ratio for P1 by hand on one path.
  const auto gauss = random_covariance(20, 8);
  const auto net = build_net(increment_distance(gauss, kPhi2), kPhi2);
  const auto path = PathSampler(gauss).sample(3, 0).values;
  const double z = compute_Z(path, net, ZMode::OneDist).value;
  const auto c = default_constants(Proposition::P1, 1.0);
  double worst = 0.0;
  for (std::size_t t = 0; t < 20; ++t) {
    const std::size_t u = parent_of(net, 0, t);
    const double rhs = 15.0 * sigma(net, t, 0) + 4.0 * net.space().d1(t, u) * std::sqrt(std::log2(1.0 + z));
    if (rhs > 0.0) worst = std::max(worst, std::fabs(path[t] - path[u]) / rhs);
  }
  CHECK_THAT(verify_certificate(path, net, Proposition::P1, 0, c).worst_ratio, WithinRel(worst, 1e-12));
}

TEST_CASE("canonical two-distance model", "[procsim]") {
  CounterRng rng(1);
  CanonicalTwoDist model;
  model.n_vars = 6;
  model.noise = Noise::SymExponential;
  for (int i = 0; i < 10; ++i) {
    std::vector<double> v(6);
    for (double& x : v) x = rng.normal() / std::sqrt(6.0);
    model.coeff_points.push_back(v);
  }
  const auto cal = calibrate_canonical(model, 20000, 11);
  CHECK(cal.c1 > 0.0);
  CHECK(cal.c2 > 0.0);
  CHECK(cal.max_two_gauge_mean <= 1.0);
  const auto space = canonical_space(model, cal);
  CHECK(space.p1 == 2.0);
  CHECK(space.p2 == 1.0);

  // the increment condition also holds on fresh draws
  const PathSampler sampler(model);
  std::vector<std::vector<double>> paths;
  for (std::uint64_t i = 0; i < 20000; ++i) paths.push_back(sampler.sample(999, i).values);
  const auto phi2 = YoungFunction::phi_p(2.0);
  const auto phi1 = YoungFunction::phi_p(1.0);
  double worst = 0.0;
  for (std::size_t s = 0; s < 10; ++s)
    for (std::size_t t = s + 1; t < 10; ++t) {
      double acc = 0.0;
      for (const auto& p : paths) {
        const double inc = std::fabs(p[t] - p[s]);
        acc += std::min(phi2.eval(inc / space.d1(s, t)), phi1.eval(inc / (*space.d2)(s, t)));
      }
      worst = std::max(worst, acc / static_cast<double>(paths.size()));
    }
  CHECK(worst <= 1.0);

  const auto net = build_net(space, phi1);
  const auto c3 = default_constants(Proposition::P3, 1.0, 2.0);
  const auto c4 = default_constants(Proposition::P4, 1.0, 2.0);
  CHECK(c3.A == 27.0);
  CHECK(c3.B == 2.0);
  CHECK(c4.A == 54.0);
  CHECK(c4.B == 5.0);
  const auto plan3 = make_plan(net, Proposition::P3, 0);
  const auto plan4 = make_plan(net, Proposition::P4);
  for (std::uint64_t i = 0; i < 200; ++i) {
    const auto& p = paths[i];
    const double z = compute_Z(p, net, ZMode::TwoDistMin).value;
    CHECK(verify_certificate(p, plan3, z, c3).pass);
    CHECK(verify_certificate(p, plan4, z, c4).pass);
  }
  CHECK_THROWS_AS(increment_distance(model, kPhi2), ArgumentError);
}

TEST_CASE("fbm modulus profile", "[procsim]") {
  std::vector<double> small_gap;
  for (double h : {0.3, 0.5, 0.7}) {
    const auto rows = fbm_modulus_profile(h, 256);
    REQUIRE_FALSE(rows.empty());
    double lo = std::numeric_limits<double>::infinity();
    double hi = 0.0;
    double acc = 0.0;
    std::size_t cnt = 0;
    for (const auto& r : rows) {
      CHECK(std::isfinite(r.ratio));
      CHECK(r.ratio > 0.0);
      lo = std::min(lo, r.ratio);
      hi = std::max(hi, r.ratio);
      if (r.t - r.s < 1.5 / 255.0) {
        acc += r.ratio;
        ++cnt;
      }
    }
    CHECK(hi / lo <= 8.0);
    small_gap.push_back(acc / static_cast<double>(cnt));
  }
  CHECK(small_gap[0] > small_gap[1]);
  CHECK(small_gap[1] > small_gap[2]);
  CHECK_THROWS_AS(fbm_modulus_profile(1.2), ArgumentError);
}
