#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <memory>
#include <vector>

#include "catch_amalgamated.hpp"

#include "gchain/chain.hpp"
#include "gchain/io.hpp"
#include "gchain/metric.hpp"
#include "gchain/net.hpp"
#include "gchain/rng.hpp"

using namespace gchain;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

const YoungFunction kPhi2 = YoungFunction::phi_p(2.0);

FiniteMetricSpace line(const std::vector<double>& xs) {
  std::vector<std::vector<double>> pts;
  for (double x : xs) pts.push_back({x});
  return FiniteMetricSpace::one(euclidean_distances(pts));
}

std::vector<std::vector<double>> random_points(CounterRng& rng, std::size_t n, std::size_t dim) {
  std::vector<std::vector<double>> pts(n, std::vector<double>(dim));
  for (auto& p : pts)
    for (double& v : p) v = rng.normal();
  return pts;
}

// Brute-force functionals computed straight from the level sets, sharing
// nothing with the library beyond the distance matrix and the sets T_n.
struct Oracle {
  const DistanceMatrix& d;
  std::vector<std::vector<std::size_t>> levels;
  double p = 1.0;

  Oracle(const AdmissibleNet& net, const DistanceMatrix& dm, double exponent = 1.0) : d(dm), p(exponent) {
    for (std::size_t n = 0; n <= net.terminal_level(); ++n) {
      const auto lvl = net.level(n);
      levels.emplace_back(lvl.begin(), lvl.end());
    }
  }
  std::size_t top() const { return levels.size() - 1; }
  double set_dist(std::size_t t, std::size_t n) const {
    if (n > top()) return 0.0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t u : levels[n]) best = std::min(best, d(t, u));
    return best;
  }
  double w(std::size_t n) const { return std::pow(2.0, p * static_cast<double>(n)); }
  double sigma(std::size_t t, std::size_t m) const {
    double acc = 0.0;
    for (std::size_t n = m; n <= top(); ++n) acc += w(n) * set_dist(t, n);
    return acc;
  }
  double sigma_trunc(std::size_t t, double a) const {
    double acc = 0.0;
    for (std::size_t n = 0; n <= top(); ++n) acc += w(n) * std::min(set_dist(t, n), a);
    return acc;
  }
  double tau(std::size_t s, std::size_t t, double a) const { return std::max(sigma_trunc(s, a), sigma_trunc(t, a)); }
  double f(std::size_t s, std::size_t t, std::size_t k) const {
    double geo = 0.0;
    for (std::size_t l = 0; l <= k; ++l) geo += w(l);
    return sigma(s, k + 1) + sigma(t, k + 1) + geo * d(s, t);
  }
};

}  // namespace

// ---------------------------------------------------------------------------
// metric spaces

TEST_CASE("metric validation", "[metric]") {
  CHECK(validate_metric(DistanceMatrix::from_rows({{0.0}})));
  CHECK_FALSE(validate_metric(DistanceMatrix::from_rows({{0, 1, 3}, {1, 0, 1}, {3, 1, 0}})));
  CounterRng rng(5);
  const auto pts = random_points(rng, 10, 2);
  const auto dm = euclidean_distances(pts);
  CHECK(validate_metric(dm));
  for (std::size_t a = 0; a < 10; ++a)
    for (std::size_t b = 0; b < 10; ++b)
      for (std::size_t c = 0; c < 10; ++c) CHECK(dm(a, c) <= dm(a, b) + dm(b, c) + 1e-12);
  CHECK_THROWS_AS(FiniteMetricSpace::one(DistanceMatrix::from_rows({{0, 1, 3}, {1, 0, 1}, {3, 1, 0}})), DataError);
}

TEST_CASE("coincident points are merged", "[metric]") {
  const auto space = line({0.0, 1.0, 0.0, 2.0});
  const auto merged = merge_coincident(space);
  CHECK(merged.space.size() == 3);
  CHECK(merged.representative == std::vector<std::size_t>{0, 1, 0, 2});
}

// ---------------------------------------------------------------------------
// nets

TEST_CASE("net on a single point", "[net]") {
  const auto net = build_net(line({3.0}), kPhi2);
  CHECK(net.terminal_level() == 0);
  CHECK(net.level(0).size() == 1);
  CHECK(net.level(5).size() == 1);
  CHECK(net.dist(0, 0) == 0.0);
  CHECK(gamma2_upper(net) == 0.0);
}

TEST_CASE("net on two points", "[net]") {
  const auto net = build_net(line({0.0, 1.0}), kPhi2);
  REQUIRE(net.terminal_level() == 1);
  REQUIRE(net.level(0).size() == 1);
  const std::size_t medoid = net.level(0)[0];
  CHECK(medoid == 0);  // tie goes to the lowest index
  const std::size_t other = 1 - medoid;
  CHECK(net.level(1).size() == 2);
  CHECK(net.dist(0, other) == 1.0);
  CHECK(net.dist(0, medoid) == 0.0);
  CHECK(net.dist(7, other) == 0.0);
  CHECK(sigma(net, other, 0) == 1.0);
  CHECK(sigma(net, medoid, 0) == 0.0);
  CHECK(sigma_trunc(net, other, 0.5) == 0.5);
  CHECK(sigma_trunc(net, medoid, 0.5) == 0.0);
  CHECK(tau(net, 0, 1) == 1.0);
  CHECK(tau(net, 1, 1) == 0.0);
  CHECK(k_level(net, 0, 1) == 0);
  CHECK(tau_bar(net, 0, 1) == 1.0);
  CHECK(tau_bar(net, 0, 0) == 0.0);
  CHECK(chain_seq(net, other, 0).indices == std::vector<std::size_t>{0, 1});
  CHECK(chain_seq(net, medoid, 0).indices == std::vector<std::size_t>{0});
  CHECK(gamma2_upper(net) == 1.0);
  CHECK_THROWS_AS(k_level(net, 1, 1), ArgumentError);
  CHECK_THROWS_AS(sigma_trunc(net, 0, 0.0), ArgumentError);
}

TEST_CASE("net on sixteen equispaced points", "[net]") {
  std::vector<double> xs;
  for (int i = 0; i < 16; ++i) xs.push_back(i);
  const auto net = build_net(line(xs), kPhi2);
  CHECK(net.budget(0) == 1.0);
  CHECK(net.budget(1) == 15.0);
  CHECK(net.budget(2) == 65535.0);
  CHECK(net.level(1).size() <= 15);
  CHECK(net.terminal_level() == 2);
  CHECK(net.level(2).size() == 16);
}

TEST_CASE("bernstein budgets", "[net]") {
  const auto psi = YoungFunction::phi_p(1.0);
  CHECK(level_budget(psi, 1) == 3.0);
  CHECK(level_budget(psi, 2) == 15.0);
  CHECK(level_budget(psi, 3) == 255.0);
  CHECK(level_budget(psi, 4) == 65535.0);
}

TEST_CASE("greedy nets are admissible with optimal projections", "[net][property]") {
  CounterRng rng(17);
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t n = 5 + rng.below(40);
    const auto pts = random_points(rng, n, 1 + rng.below(3));
    const auto space = FiniteMetricSpace::one(euclidean_distances(pts));
    for (const auto& psi : {kPhi2, YoungFunction::phi_p(1.0), YoungFunction::bernstein(2)}) {
      const auto net = build_net(space, psi);
      CHECK(net.level(0).size() == 1);
      CHECK(net.level(net.terminal_level()).size() == n);
      for (std::size_t lvl = 0; lvl <= net.terminal_level(); ++lvl) {
        CHECK(static_cast<double>(net.level(lvl).size()) <= net.budget(lvl));
        if (lvl > 0)
          for (std::size_t t : net.level(lvl - 1)) CHECK(net.contains(lvl, t));
        for (std::size_t t = 0; t < n; ++t) {
          double best = std::numeric_limits<double>::infinity();
          for (std::size_t u : net.level(lvl)) best = std::min(best, space.d1(t, u));
          CHECK(net.dist(lvl, t) == best);
          CHECK(space.d1(t, net.projection(lvl, t)) == best);
          if (net.contains(lvl, t)) CHECK(net.projection(lvl, t) == t);
        }
      }
    }
  }
}

TEST_CASE("net JSON round trip and corrupted imports", "[net]") {
  CounterRng rng(3);
  const auto space = FiniteMetricSpace::one(euclidean_distances(random_points(rng, 30, 2)));
  const auto net = build_net(space, YoungFunction::phi_p(1.0));
  const auto doc = net_to_json(net);
  const auto back = net_from_json(Json::parse(dump_json(doc)), space, YoungFunction::phi_p(1.0));
  CHECK(back.terminal_level() == net.terminal_level());
  for (std::size_t lvl = 0; lvl <= net.terminal_level(); ++lvl)
    for (std::size_t t = 0; t < space.size(); ++t) CHECK(back.dist(lvl, t) == net.dist(lvl, t));

  auto bad_budget = doc;
  bad_budget["budgets"][1] = 4.0;
  CHECK_THROWS_AS(net_from_json(bad_budget, space, YoungFunction::phi_p(1.0)), DataError);
  auto not_nested = doc;
  not_nested["levels"][0] = std::vector<std::size_t>{29};
  not_nested["levels"][1] = std::vector<std::size_t>{0, 1, 2};
  CHECK_THROWS_AS(net_from_json(not_nested, space, YoungFunction::phi_p(1.0)), DataError);
  CHECK_THROWS_AS(net_from_json(Json::object(), space, YoungFunction::phi_p(1.0)), DataError);
  CHECK_THROWS_AS(net_from_json(doc, space, kPhi2), DataError);
}

// ---------------------------------------------------------------------------
// one-distance functionals

TEST_CASE("functionals match the brute-force oracle on random spaces", "[chain][property]") {
  CounterRng rng(2718);
  for (int rep = 0; rep < 60; ++rep) {
    const std::size_t n = 3 + rng.below(30);
    const auto space = FiniteMetricSpace::one(euclidean_distances(random_points(rng, n, 2)));
    const auto psi = rep % 2 ? kPhi2 : YoungFunction::phi_p(1.0);
    const auto net = build_net(space, psi);
    const Oracle o(net, space.d1);
    for (std::size_t t = 0; t < n; ++t) {
      for (std::size_t m = 0; m <= net.terminal_level() + 1; ++m) {
        CHECK_THAT(sigma(net, t, m), WithinRel(o.sigma(t, m), 1e-12));
        CHECK(sigma(net, t, m + 1) <= sigma(net, t, m));
        if (net.contains(m, t)) CHECK(sigma(net, t, m) == 0.0);
      }
      if (net.contains(0, t)) CHECK(sigma_trunc(net, t, 0.3) == 0.0);
      double reach = 0.0;
      for (std::size_t lvl = 0; lvl <= net.terminal_level(); ++lvl) reach = std::max(reach, net.dist(lvl, t));
      CHECK_THAT(sigma_trunc(net, t, reach + 1.0), WithinRel(sigma(net, t, 0), 1e-12));
    }
    for (std::size_t s = 0; s < n; ++s)
      for (std::size_t t = s + 1; t < n; ++t) {
        const double dst = space.d1(s, t);
        CHECK_THAT(tau(net, s, t), WithinRel(o.tau(s, t, dst), 1e-12));
        std::size_t k = 0;
        for (std::size_t lvl = 0; lvl <= o.top(); ++lvl)
          if (o.set_dist(s, lvl) + o.set_dist(t, lvl) >= dst) k = lvl;
        CHECK(k_level(net, s, t) == k);
        CHECK_THAT(tau_bar(net, s, t), WithinRel(o.f(s, t, k), 1e-12));
      }
  }
}

TEST_CASE("k(s,t) minimizes the switch cost", "[chain][property]") {
  CounterRng rng(99);
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t n = 4 + rng.below(25);
    const auto space = FiniteMetricSpace::one(euclidean_distances(random_points(rng, n, 1 + rng.below(3))));
    const auto net = build_net(space, rep % 3 ? kPhi2 : YoungFunction::phi_p(1.0));
    const Oracle o(net, space.d1);
    for (std::size_t s = 0; s < n; ++s)
      for (std::size_t t = s + 1; t < n; ++t) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k <= o.top() + 2; ++k) best = std::min(best, o.f(s, t, k));
        const double at_k = o.f(s, t, k_level(net, s, t));
        CHECK(at_k <= best * (1.0 + 1e-12));
      }
  }
}

TEST_CASE("modulus sandwich and metric axioms", "[chain][property]") {
  CounterRng rng(4242);
  for (int rep = 0; rep < 40; ++rep) {
    const std::size_t n = 12;
    const auto space = FiniteMetricSpace::one(euclidean_distances(random_points(rng, n, 2)));
    const auto net = build_net(space, kPhi2);
    std::vector<double> tm(n * n);
    for (std::size_t s = 0; s < n; ++s)
      for (std::size_t t = 0; t < n; ++t) {
        tm[s * n + t] = tau(net, s, t);
        if (s == t) continue;
        const double tb = tau_bar(net, s, t);
        CHECK(0.5 * tb <= tm[s * n + t]);
        CHECK(tm[s * n + t] <= tb);
        CHECK(tm[s * n + t] > 0.0);
      }
    for (std::size_t a = 0; a < n; ++a) {
      CHECK(tm[a * n + a] == 0.0);
      for (std::size_t b = 0; b < n; ++b) {
        CHECK(tm[a * n + b] == tm[b * n + a]);
        for (std::size_t c = 0; c < n; ++c) CHECK(tm[a * n + c] <= tm[a * n + b] + tm[b * n + c] + 1e-12);
      }
    }
  }
}

TEST_CASE("halving sequences", "[chain][property]") {
  CounterRng rng(8);
  for (int rep = 0; rep < 40; ++rep) {
    const std::size_t n = 5 + rng.below(30);
    const auto space = FiniteMetricSpace::one(euclidean_distances(random_points(rng, n, 2)));
    const auto net = build_net(space, YoungFunction::phi_p(1.0));
    for (std::size_t t = 0; t < n; ++t)
      for (std::size_t m = 0; m <= net.terminal_level(); ++m) {
        const auto seq = chain_seq(net, t, m);
        CHECK(seq.indices.front() == m);
        double total = 0.0;
        for (std::size_t i = 1; i < seq.indices.size(); ++i) {
          CHECK(seq.indices[i] > seq.indices[i - 1]);
          CHECK(2.0 * net.dist(seq.indices[i], t) < net.dist(seq.indices[i - 1], t));
          total += net.dist(seq.indices[i], t);
        }
        CHECK(total <= 2.0 * net.dist(m, t));
        if (net.contains(m, t)) CHECK(seq.indices.size() == 1);
      }
  }
}

TEST_CASE("gamma2 upper bound on nested subspaces", "[chain]") {
  CounterRng rng(12);
  const auto pts = random_points(rng, 40, 2);
  const auto full = FiniteMetricSpace::one(euclidean_distances(pts));
  const std::vector<std::vector<double>> sub(pts.begin(), pts.begin() + 20);
  const auto part = FiniteMetricSpace::one(euclidean_distances(sub));
  // Both spaces cover within the same number of levels here, so the smaller
  // space can never need more chaining mass than its own diameter allows.
  CHECK(gamma2_upper(part, kPhi2) <= gamma2_upper(full, kPhi2) + part.d1.diameter());
  CHECK(gamma2_upper(part, kPhi2) >= 0.0);
}

// ---------------------------------------------------------------------------
// two-distance functionals

namespace {

FiniteMetricSpace random_two(CounterRng& rng, std::size_t n, double p1, double p2) {
  const auto pts = random_points(rng, n, 3);
  return FiniteMetricSpace::two(euclidean_distances(pts, 0.7 + rng.uniform()), sup_distances(pts, 0.5 + rng.uniform()),
                                p1, p2);
}

}  // namespace

TEST_CASE("two-distance two-point example", "[chain][two]") {
  const auto d = euclidean_distances({{0.0}, {1.0}});
  const auto space = FiniteMetricSpace::two(d, d, 2.0, 1.0);
  const auto net = build_net(space, kPhi2);
  const std::size_t other = 1 - net.level(0)[0];
  CHECK(two_sigma(net, other, 0, 1) == 1.0);
  CHECK(two_sigma(net, other, 0, 2) == 1.0);
  CHECK(two_sigma(net, 1 - other, 0, 1) == 0.0);
  CHECK_THROWS_AS(two_sigma(net, other, 0, 3), ArgumentError);
  CHECK_THROWS_AS(two_sigma(build_net(line({0.0, 1.0}), kPhi2), 0, 0, 1), ArgumentError);
}

TEST_CASE("two-distance reduces to one distance", "[chain][two]") {
  CounterRng rng(77);
  for (int rep = 0; rep < 20; ++rep) {
    const auto pts = random_points(rng, 14, 2);
    const auto d = euclidean_distances(pts);
    const auto one = build_net(FiniteMetricSpace::one(d), kPhi2);
    const auto two = build_net(FiniteMetricSpace::two(d, d, 1.0, 1.0), kPhi2);
    for (std::size_t t = 0; t < 14; ++t) {
      CHECK_THAT(two_sigma(two, t, 0, 1), WithinRel(sigma(one, t, 0), 1e-12));
      for (std::size_t m = 0; m <= two.terminal_level(); ++m) {
        const auto a = two_chain_seq(two, t, m);
        const auto b = chain_seq(one, t, m);
        CHECK(a.indices == b.indices);
      }
    }
    for (std::size_t s = 0; s < 14; ++s)
      for (std::size_t t = s + 1; t < 14; ++t) {
        const auto r = two_modulus(two, s, t);
        CHECK(r.k == r.k1);
        CHECK(r.k == r.k2);
        CHECK(r.k == k_level(one, s, t));
        CHECK_THAT(r.tau_bar, WithinRel(2.0 * tau_bar(one, s, t), 1e-12));
        CHECK_THAT(r.tau1, WithinRel(tau(one, s, t), 1e-12));
        CHECK(r.upper_bound_correction == 0.0);
      }
  }
}

TEST_CASE("two-distance inequalities on random spaces", "[chain][two][property]") {
  CounterRng rng(31337);
  const std::array<std::array<double, 2>, 3> exps{{{2.0, 1.0}, {1.0, 2.0}, {1.5, 0.5}}};
  for (int rep = 0; rep < 60; ++rep) {
    const auto [p1, p2] = exps[static_cast<std::size_t>(rep) % 3];
    const std::size_t n = 6 + rng.below(20);
    const auto space = random_two(rng, n, p1, p2);
    const auto net = build_net(space, rep % 2 ? kPhi2 : YoungFunction::phi_p(1.0));
    const Oracle o1(net, space.d1, p1);
    const Oracle o2(net, *space.d2, p2);
    for (std::size_t t = 0; t < n; ++t)
      for (std::size_t m = 0; m <= net.terminal_level(); ++m) {
        CHECK_THAT(two_sigma(net, t, m, 1), WithinRel(o1.sigma(t, m), 1e-12));
        CHECK_THAT(two_sigma(net, t, m, 2), WithinRel(o2.sigma(t, m), 1e-12));
        const auto seq = two_chain_seq(net, t, m);
        for (int j = 1; j <= 2; ++j) {
          const double bound = std::pow(2.0, -space.exponent(j) * static_cast<double>(m)) * two_sigma(net, t, m, j);
          CHECK(seq.dbar[static_cast<std::size_t>(j - 1)] <= bound * (1.0 + 1e-12) + 1e-15);
        }
        if (net.contains(m, t)) {
          CHECK(seq.indices.size() == 1);
          CHECK(seq.dbar[0] == 0.0);
          CHECK(seq.dbar[1] == 0.0);
        }
      }
    for (std::size_t s = 0; s < n; ++s)
      for (std::size_t t = s + 1; t < n; ++t) {
        const auto r = two_modulus(net, s, t);
        const double d1 = space.d1(s, t);
        const double d2 = (*space.d2)(s, t);
        // independent recomputation of k, tau_j and tau_bar
        std::size_t k = 0;
        for (std::size_t lvl = 0; lvl <= o1.top(); ++lvl) {
          const double lhs = o1.w(lvl) * (o1.set_dist(s, lvl) + o1.set_dist(t, lvl)) +
                             o2.w(lvl) * (o2.set_dist(s, lvl) + o2.set_dist(t, lvl));
          if (lhs >= o1.w(lvl) * d1 + o2.w(lvl) * d2) k = lvl;
        }
        CHECK(r.k == k);
        CHECK_THAT(r.tau_bar, WithinRel(o1.f(s, t, k) + o2.f(s, t, k), 1e-12));
        CHECK_THAT(r.tau1, WithinRel(o1.tau(s, t, d1), 1e-12));
        CHECK_THAT(r.tau2, WithinRel(o2.tau(s, t, d2), 1e-12));

        CHECK(std::min(r.k1, r.k2) <= r.k);
        CHECK(r.k <= std::max(r.k1, r.k2));
        CHECK(r.tau1 + r.tau2 <= r.tau_bar * (1.0 + 1e-12));
        const double k1 = static_cast<double>(r.k1);
        const double k2 = static_cast<double>(r.k2);
        double correction = 0.0;
        if (r.k1 >= r.k2) correction += std::pow(2.0, p2) / (std::pow(2.0, p2) - 1.0) *
                                        (std::pow(2.0, k1 * p2) - std::pow(2.0, k2 * p2)) * d2;
        if (r.k2 >= r.k1) correction += std::pow(2.0, p1) / (std::pow(2.0, p1) - 1.0) *
                                        (std::pow(2.0, k2 * p1) - std::pow(2.0, k1 * p1)) * d1;
        CHECK_THAT(r.upper_bound_correction, WithinAbs(correction, 1e-12 * std::max(1.0, correction)));
        CHECK(r.tau_bar <= (2.0 * (r.tau1 + r.tau2) + correction) * (1.0 + 1e-12));
        const double factor = std::max(std::pow(2.0, -p1 * static_cast<double>(r.k)),
                                       std::pow(2.0, -p2 * static_cast<double>(r.k)));
        CHECK(r.dbar[0] + r.dbar[1] <= factor * r.tau_bar * (1.0 + 1e-12));
        CHECK(r.dbar[0] >= d1);
        CHECK(r.dbar[1] >= d2);
      }
  }
}
