#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "catch_amalgamated.hpp"

#include "gchain/empsq.hpp"

using namespace gchain;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

const SampleLaw kGauss8{LawKind::GaussianIso, 8};

// Z parts by explicit loops over draws and ordered pairs.
ZParts z_oracle(const FunctionClass& cls, const SampleBatch& batch, const AdmissibleNet& net, double k) {
  const std::size_t n = batch.size();
  const double root = std::sqrt(static_cast<double>(n));
  const double k2 = k * k;
  auto val = [&](std::size_t f, std::size_t i) {
    double acc = 0.0;
    for (std::size_t c = 0; c < cls.dim(); ++c)
      acc += cls.functions(static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(c)) *
             batch.draws(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c));
    return acc;
  };
  auto phi = [&](double x) {
    const double e = std::min(root * x, x * x);
    return std::exp2(e) - 1.0;
  };
  ZParts z;
  for (std::size_t lvl = 1; lvl <= net.terminal_level(); ++lvl) {
    const double nn = std::floor(std::exp2(std::pow(std::exp2(static_cast<double>(lvl)), 2.0)) - 1.0);
    double u = 0.0;
    double w = 0.0;
    for (std::size_t g : net.level(lvl))
      for (std::size_t h : net.level(lvl)) {
        if (g == h) continue;
        double e_diff = 0.0;
        for (std::size_t c = 0; c < cls.dim(); ++c) {
          const double a = cls.functions(static_cast<Eigen::Index>(g), static_cast<Eigen::Index>(c)) -
                           cls.functions(static_cast<Eigen::Index>(h), static_cast<Eigen::Index>(c));
          e_diff += a * a;
        }
        const double d = cls.scale * std::sqrt(e_diff);
        double s1 = 0.0;
        double s2 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double a = val(g, i);
          const double b = val(h, i);
          s1 += (a - b) * (a - b) - e_diff;
          s2 += a * a - b * b - cls.second_moments[g] + cls.second_moments[h];
        }
        u += phi(std::fabs(s1) / (k2 * root * d * d));
        w += phi(std::fabs(s2) / (2.0 * k2 * root * cls.alpha * d));
      }
    z.z1 += u / (nn * nn * nn);
    z.z2 += w / (nn * nn * nn);
  }
  const std::size_t base = net.level(0)[0];
  double s3 = 0.0;
  for (std::size_t i = 0; i < n; ++i) s3 += val(base, i) * val(base, i) - cls.second_moments[base];
  z.z3 = phi(std::fabs(s3) / (k2 * root * cls.alpha * cls.alpha));
  return z;
}

}  // namespace

TEST_CASE("k0 level", "[empsq]") {
  CHECK(k0_level(1) == 0);
  CHECK(k0_level(4) == 1);
  CHECK(k0_level(15) == 1);
  CHECK(k0_level(16) == 2);
  CHECK(k0_level(100) == 3);
  CHECK(k0_level(128) == 3);
  CHECK_THROWS_AS(k0_level(0), ArgumentError);
}

TEST_CASE("square process basics", "[empsq]") {
  const auto zero = FunctionClass::make(Eigen::MatrixXd::Zero(1, 3), 1.0);
  const auto batch = draw_batch({LawKind::GaussianIso, 3}, 50, 1);
  CHECK(s_n_process(zero, batch)[0] == 0.0);

  const auto e1 = FunctionClass::make(Eigen::MatrixXd::Ones(1, 1), 1.0);
  const auto rad = draw_batch({LawKind::Rademacher, 1}, 37, 4);
  CHECK(s_n_process(e1, rad)[0] == 0.0);

  // Var(g^2) = 2 for a standard gaussian coordinate.
  Eigen::MatrixXd f = Eigen::MatrixXd::Zero(1, 8);
  f(0, 3) = 1.0;
  const auto cls = FunctionClass::make(f, 1.0);
  const auto big = draw_batch(kGauss8, 100000, 5);
  CHECK(std::fabs(s_n_process(cls, big)[0]) <= 5.0 * std::sqrt(2.0 / 100000.0));

  const auto b1 = draw_batch(kGauss8, 20, 9, 3);
  const auto b2 = draw_batch(kGauss8, 20, 9, 3);
  CHECK(b1.draws == b2.draws);
  CHECK_FALSE(draw_batch(kGauss8, 20, 9, 4).draws == b1.draws);
  CHECK_THROWS_AS(evaluate(cls, draw_batch({LawKind::GaussianIso, 2}, 5, 1)), DataError);
}

TEST_CASE("scale calibration", "[empsq]") {
  const auto dirs = random_unit_vectors(16, 8, 3);
  for (Eigen::Index r = 0; r < dirs.rows(); ++r) CHECK_THAT(dirs.row(r).norm(), WithinAbs(1.0, 1e-12));
  const double gauss = calibrate_scale(dirs, kGauss8, 100000, 7);
  CHECK_THAT(gauss, WithinAbs(1.05 * std::sqrt(8.0 * std::numbers::ln2 / 3.0), 0.06));
  const double rad = calibrate_scale(dirs, {LawKind::Rademacher, 8}, 100000, 7);
  CHECK(rad <= gauss * 1.02);
}

TEST_CASE("P, Q, R decomposition", "[empsq]") {
  const auto cls = random_unit_class(8, 64, 1, kGauss8, 5000);
  const auto net = build_net(cls.space(), YoungFunction::phi_p(2.0));
  for (std::size_t n : {4u, 20u, 128u}) {
    const auto batch = draw_batch(kGauss8, n, 11, n);
    const auto terms = pqr_decompose(cls, batch, net);
    const auto s = s_n_process(cls, batch);
    const std::size_t k0 = k0_level(n);
    std::size_t members = 0;
    for (std::size_t f = 0; f < cls.size(); ++f) {
      const auto& t = terms[f];
      CHECK(t.identity_error <= 1e-12);
      CHECK(t.cauchy_schwarz);
      CHECK(std::fabs(t.q) <= 2.0 * std::sqrt(t.p * t.r) * (1.0 + 1e-12) + 1e-300);
      CHECK_THAT(t.p + t.q + t.r, WithinRel(s[f] + cls.second_moments[f], 1e-12));
      if (net.contains(k0, f)) {
        ++members;
        CHECK(t.p == 0.0);
        CHECK(t.q == 0.0);
        CHECK_THAT(t.r, WithinRel(s[f] + cls.second_moments[f], 1e-12));
      }
    }
    CHECK(members >= 1);
    if (k0 >= net.terminal_level()) CHECK(members == cls.size());
  }
}

TEST_CASE("theorem bound arithmetic and closing constants", "[empsq]") {
  CHECK_THAT(square_bound(1.0, 1.0, 100, 1.0, 1.0, 1.0), WithinRel(0.21, 1e-14));
  CHECK_THAT(square_bound(1.0, 1.0, 100, 1.0, 1.0, 0.0), WithinRel(0.11, 1e-14));
  const auto c = SquareBoundConstants::closing(1.0, 1.0);
  CHECK(c.A == 1800.0);
  CHECK(c.B == 3456.0);
  CHECK_THROWS_AS(square_bound(1.0, 1.0, 0, 1.0, 1.0, 0.0), ArgumentError);
}

TEST_CASE("Z parts agree with the explicit sums", "[empsq]") {
  const auto cls = random_unit_class(4, 20, 2, {LawKind::GaussianIso, 4}, 5000);
  const auto net = build_net(cls.space(), YoungFunction::phi_p(2.0));
  for (std::uint64_t r = 0; r < 5; ++r) {
    const auto batch = draw_batch({LawKind::GaussianIso, 4}, 32, 3, r);
    const auto z = compute_z_parts(cls, batch, net, 1.2);
    const auto o = z_oracle(cls, batch, net, 1.2);
    CHECK_THAT(z.z1, WithinRel(o.z1, 1e-9));
    CHECK_THAT(z.z2, WithinRel(o.z2, 1e-9));
    CHECK_THAT(z.z3, WithinRel(o.z3, 1e-9));
  }
  const auto huge = FunctionClass::make(random_unit_vectors(257, 2, 1), 1.0);
  const auto hnet = build_net(huge.space(), YoungFunction::phi_p(2.0));
  CHECK_THROWS_AS(compute_z_parts(huge, draw_batch({LawKind::GaussianIso, 2}, 4, 1), hnet, 1.0), SizeError);
}

TEST_CASE("theorem holds per realization with the closing constants", "[empsq]") {
  const auto zero = FunctionClass::make(Eigen::MatrixXd::Zero(1, 8), 1.0);
  for (const auto& r : verify_square_bound(zero, kGauss8, 128, 5, 1, SquareBoundConstants::closing(1.0, 1.0))) {
    CHECK(r.sup_value == 0.0);
    CHECK(r.pass);
  }
  const auto cls = random_unit_class(8, 64, 1, kGauss8);
  const auto reps = verify_square_bound(cls, kGauss8, 128, 50, 2, SquareBoundConstants::closing(1.0, 1.0));
  for (const auto& r : reps) {
    CHECK(r.pass);
    CHECK(r.max_identity_error <= 1e-9);
    CHECK(r.cauchy_schwarz);
    CHECK(r.sup_value == *std::max_element(r.s_values.begin(), r.s_values.end()));
  }
  // reps are reproducible and independent of threads
  const auto again = verify_square_bound(cls, kGauss8, 128, 50, 2, SquareBoundConstants::closing(1.0, 1.0), 3);
  for (std::size_t i = 0; i < reps.size(); ++i) CHECK(again[i].sup_value == reps[i].sup_value);

  const auto tail = square_bound_tail(reps, cls, 128, SquareBoundConstants::closing(1.0, 1.0), {0.0, 1.0, 2.0});
  REQUIRE(tail.size() == 3);
  CHECK(tail[0].bound == 1.0);
  for (const auto& row : tail) CHECK(row.empirical <= 1.0);
}

TEST_CASE("bernstein pair tail", "[empsq]") {
  const auto rows = bernstein_pair_tail(1.0, 64, kGauss8, 20000, 5, 1.05 * std::sqrt(8.0 * std::numbers::ln2 / 3.0));
  REQUIRE(rows.size() == 20);
  CHECK(rows.front().u == 0.0);
  CHECK(rows.front().empirical <= 1.0);
  CHECK(rows.front().bound == 2.0);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].empirical <= rows[i].bound);
    if (i > 0) {
      CHECK(rows[i].u > rows[i - 1].u);
      CHECK(rows[i].empirical <= rows[i - 1].empirical);
    }
  }
  CHECK(rows.back().empirical == 0.0);
  CHECK_THROWS_AS(bernstein_pair_tail(0.0, 64, kGauss8, 10, 5, 1.0), ArgumentError);
}

TEST_CASE("empirical constant calibration", "[empsq]") {
  const auto cls = random_unit_class(8, 16, 4, kGauss8);
  const auto cal = calibrate_empirical(cls, kGauss8, 64, 300, 8);
  CHECK(cal.K >= 1.0);
  CHECK(cal.K >= cal.K_raw);
  CHECK(cal.C >= cal.C_raw);
  CHECK(cal.C - cal.C_raw < 0.01 + 1e-12);
  // <f - g, X> / d is a gaussian with standard deviation 1 / scale. C_raw is
  // the largest of many heavy-tailed estimates of its phi_2 norm, so it sits
  // above the population value.
  const double population = std::sqrt(8.0 * std::numbers::ln2 / 3.0) / cls.scale;
  CHECK(cal.C_raw >= 0.95 * population);
  CHECK(cal.C_raw <= 1.25 * population);
  CHECK(round_up_2dp(0.951) == 0.96);
  CHECK(round_up_2dp(0.95) == 0.95);
  CHECK(round_down_2dp(1.549) == 1.54);
}
