#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "gchain/errors.hpp"
#include "gchain/metric.hpp"
#include "gchain/young.hpp"

namespace gchain {

/// Level budget N_n: N_0 = 1 and floor(psi(2^n)) afterwards (may be +inf).
inline double level_budget(const YoungFunction& psi, std::size_t n) {
  if (n == 0) return 1.0;
  return std::floor(psi.eval(std::ldexp(1.0, static_cast<int>(n))));
}

/// Nested point sets T_0 ⊆ T_1 ⊆ ... ⊆ T_terminal = all points, stored as one
/// insertion order plus the size of each prefix. Every level carries its
/// projections pi_n(t) under the metric the net was built on, and the set
/// distances d_j(t, T_n) for each metric of the space.
///
/// Queries past the terminal level see full coverage: pi_n(t) = t, distance 0.
class AdmissibleNet {
 public:
  [[nodiscard]] const FiniteMetricSpace& space() const noexcept { return *space_; }
  [[nodiscard]] std::shared_ptr<const FiniteMetricSpace> space_ptr() const noexcept { return space_; }
  [[nodiscard]] const YoungFunction& psi() const noexcept { return psi_; }
  [[nodiscard]] std::size_t size() const noexcept { return space_->size(); }
  [[nodiscard]] std::size_t terminal_level() const noexcept { return level_sizes_.size() - 1; }
  [[nodiscard]] bool two_distance() const noexcept { return space_->two_distance(); }

  /// Members of T_n in insertion order.
  [[nodiscard]] std::span<const std::size_t> level(std::size_t n) const {
    const std::size_t k = level_sizes_[std::min(n, terminal_level())];
    return {order_.data(), k};
  }

  [[nodiscard]] double budget(std::size_t n) const { return level_budget(psi_, n); }

  [[nodiscard]] std::size_t projection(std::size_t n, std::size_t t) const {
    check_point(t);
    return n > terminal_level() ? t : projection_[n][t];
  }

  /// d(t, T_n) in the metric the net was built on.
  [[nodiscard]] double dist(std::size_t n, std::size_t t) const {
    check_point(t);
    return n > terminal_level() ? 0.0 : build_dist_[n][t];
  }

  /// d_j(t, T_n), j in {1, 2}.
  [[nodiscard]] double dist(int j, std::size_t n, std::size_t t) const {
    check_point(t);
    if (j < 1 || j > static_cast<int>(metric_dist_.size())) throw ArgumentError("metric index out of range");
    return n > terminal_level() ? 0.0 : metric_dist_[static_cast<std::size_t>(j - 1)][n][t];
  }

  [[nodiscard]] bool contains(std::size_t n, std::size_t t) const {
    const auto lvl = level(n);
    return std::find(lvl.begin(), lvl.end(), t) != lvl.end();
  }

  /// Distance used to build the net: d1 alone, or max(d1/diam1, d2/diam2).
  [[nodiscard]] double build_distance(std::size_t a, std::size_t b) const noexcept {
    const auto& s = *space_;
    if (!s.d2) return s.d1(a, b);
    return std::max(scale1_ * s.d1(a, b), scale2_ * (*s.d2)(a, b));
  }

  /// Assemble a net from explicit nested levels (each entry is the full set
  /// T_n). Validates budgets, nesting and terminal coverage, then computes
  /// projections. Levels after the first covering level are dropped.
  static AdmissibleNet from_levels(std::shared_ptr<const FiniteMetricSpace> space, const YoungFunction& psi,
                                   const std::vector<std::vector<std::size_t>>& levels) {
    if (!space || space->size() == 0) throw ArgumentError("admissible net: empty space");
    if (levels.empty() || levels.front().size() != 1) throw DataError("admissible net: T_0 must be a single point");
    AdmissibleNet net(std::move(space), psi);
    std::vector<bool> seen(net.size(), false);
    for (std::size_t n = 0; n < levels.size(); ++n) {
      const auto& lvl = levels[n];
      if (static_cast<double>(lvl.size()) > level_budget(psi, n)) throw DataError("admissible net: level exceeds budget");
      std::vector<bool> here(net.size(), false);
      for (std::size_t t : lvl) {
        if (t >= net.size()) throw DataError("admissible net: unknown point index");
        if (here[t]) throw DataError("admissible net: repeated point in a level");
        here[t] = true;
      }
      for (std::size_t t = 0; t < net.size(); ++t)
        if (seen[t] && !here[t]) throw DataError("admissible net: levels are not nested");
      for (std::size_t t : lvl)
        if (!seen[t]) {
          seen[t] = true;
          net.order_.push_back(t);
        }
      net.level_sizes_.push_back(net.order_.size());
      net.finalize_level();
      if (net.max_build_dist_ == 0.0) break;
    }
    if (net.max_build_dist_ != 0.0) throw DataError("admissible net: last level does not cover the space");
    return net;
  }

  friend AdmissibleNet build_net(const FiniteMetricSpace& space, const YoungFunction& psi);

 private:
  AdmissibleNet(std::shared_ptr<const FiniteMetricSpace> space, const YoungFunction& psi)
      : space_(std::move(space)), psi_(psi) {
    if (space_->d2) {
      const double a = space_->d1.diameter();
      const double b = space_->d2->diameter();
      scale1_ = a > 0.0 ? 1.0 / a : 0.0;
      scale2_ = b > 0.0 ? 1.0 / b : 0.0;
    }
    metric_dist_.resize(space_->d2 ? 2 : 1);
  }

  void check_point(std::size_t t) const {
    if (t >= size()) throw ArgumentError("unknown point index");
  }

  // Extends projections and set distances to the newest level.
  void finalize_level() {
    const std::size_t n_pts = size();
    const std::size_t lvl = level_sizes_.size() - 1;
    const std::size_t first_new = lvl == 0 ? 0 : level_sizes_[lvl - 1];
    const std::size_t end = level_sizes_[lvl];

    std::vector<std::size_t> proj(n_pts, std::numeric_limits<std::size_t>::max());
    std::vector<double> bdist(n_pts, std::numeric_limits<double>::infinity());
    if (lvl > 0) {
      proj = projection_.back();
      bdist = build_dist_.back();
    }
    for (std::size_t t = 0; t < n_pts; ++t) {
      for (std::size_t k = first_new; k < end; ++k) {
        const std::size_t u = order_[k];
        const double d = build_distance(t, u);
        const bool better = d < bdist[t] || (d == bdist[t] && u != proj[t] &&
                                             (u == t || (proj[t] != t && u < proj[t])));
        if (better) {
          bdist[t] = d;
          proj[t] = u;
        }
      }
    }
    projection_.push_back(std::move(proj));
    build_dist_.push_back(std::move(bdist));
    max_build_dist_ = *std::max_element(build_dist_.back().begin(), build_dist_.back().end());

    for (std::size_t j = 0; j < metric_dist_.size(); ++j) {
      const DistanceMatrix& d = space_->metric(static_cast<int>(j + 1));
      std::vector<double> md = lvl > 0 ? metric_dist_[j].back()
                                       : std::vector<double>(n_pts, std::numeric_limits<double>::infinity());
      for (std::size_t t = 0; t < n_pts; ++t)
        for (std::size_t k = first_new; k < end; ++k) md[t] = std::min(md[t], d(t, order_[k]));
      metric_dist_[j].push_back(std::move(md));
    }
  }

  std::shared_ptr<const FiniteMetricSpace> space_;
  YoungFunction psi_;
  double scale1_ = 1.0;
  double scale2_ = 1.0;
  std::vector<std::size_t> order_;
  std::vector<std::size_t> level_sizes_;
  std::vector<std::vector<std::size_t>> projection_;
  std::vector<std::vector<double>> build_dist_;
  std::vector<std::vector<std::vector<double>>> metric_dist_;  // [metric][level][point]
  double max_build_dist_ = 0.0;
};

/// Greedy farthest-point construction. T_0 is the 1-center (point minimizing
/// its maximum distance); each later level extends the previous one by the
/// point farthest from the current set until the budget is spent or every
/// point is covered. Ties go to the lowest index.
inline AdmissibleNet build_net(const FiniteMetricSpace& space, const YoungFunction& psi) {
  if (space.size() == 0) throw ArgumentError("build_net: empty space");
  AdmissibleNet net(std::make_shared<const FiniteMetricSpace>(space), psi);
  const std::size_t n = space.size();

  std::size_t center = 0;
  double best_radius = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    double radius = 0.0;
    for (std::size_t j = 0; j < n; ++j) radius = std::max(radius, net.build_distance(i, j));
    if (radius < best_radius) {
      best_radius = radius;
      center = i;
    }
  }

  std::vector<double> gap(n);
  for (std::size_t t = 0; t < n; ++t) gap[t] = net.build_distance(t, center);
  net.order_.push_back(center);
  net.level_sizes_.push_back(1);
  net.finalize_level();

  constexpr std::size_t kMaxLevels = 64;
  for (std::size_t lvl = 1; net.max_build_dist_ > 0.0; ++lvl) {
    if (lvl > kMaxLevels) throw NumericError("build_net: budgets grow too slowly to cover the space");
    const double budget = std::min(level_budget(psi, lvl), static_cast<double>(n));
    while (static_cast<double>(net.order_.size()) < budget) {
      const auto far = std::max_element(gap.begin(), gap.end());
      if (*far == 0.0) break;
      const auto u = static_cast<std::size_t>(far - gap.begin());
      net.order_.push_back(u);
      for (std::size_t t = 0; t < n; ++t) gap[t] = std::min(gap[t], net.build_distance(t, u));
    }
    net.level_sizes_.push_back(net.order_.size());
    net.finalize_level();
  }
  return net;
}

inline double dist_to_level(const AdmissibleNet& net, std::size_t t, std::size_t n) { return net.dist(n, t); }

/// {points, budgets, levels, terminal_level}.
inline nlohmann::json net_to_json(const AdmissibleNet& net) {
  nlohmann::json levels = nlohmann::json::array();
  nlohmann::json budgets = nlohmann::json::array();
  for (std::size_t n = 0; n <= net.terminal_level(); ++n) {
    const auto lvl = net.level(n);
    std::vector<std::size_t> sorted(lvl.begin(), lvl.end());
    std::sort(sorted.begin(), sorted.end());
    levels.push_back(sorted);
    const double b = net.budget(n);
    if (std::isfinite(b))
      budgets.push_back(b);
    else
      budgets.push_back(nullptr);
  }
  return {{"points", net.space().points},
          {"budgets", budgets},
          {"levels", levels},
          {"terminal_level", net.terminal_level()}};
}

/// Rebuilds a net on `space` from its JSON export. Budgets are recomputed
/// from psi and checked against the stored ones.
inline AdmissibleNet net_from_json(const nlohmann::json& doc, const FiniteMetricSpace& space,
                                   const YoungFunction& psi) {
  try {
    const auto ids = doc.at("points").get<std::vector<std::string>>();
    if (ids != space.points) throw DataError("net JSON: point identifiers do not match the space");
    const auto levels = doc.at("levels").get<std::vector<std::vector<std::size_t>>>();
    const auto terminal = doc.at("terminal_level").get<std::size_t>();
    if (levels.size() != terminal + 1) throw DataError("net JSON: terminal_level inconsistent with levels");
    const auto& budgets = doc.at("budgets");
    if (budgets.size() != levels.size()) throw DataError("net JSON: budgets inconsistent with levels");
    for (std::size_t n = 0; n < budgets.size(); ++n) {
      const double expected = level_budget(psi, n);
      if (budgets[n].is_null() ? std::isfinite(expected) : budgets[n].get<double>() != expected)
        throw DataError("net JSON: budgets do not match the young function");
    }
    auto net = AdmissibleNet::from_levels(std::make_shared<const FiniteMetricSpace>(space), psi, levels);
    if (net.terminal_level() != terminal) throw DataError("net JSON: coverage reached before terminal_level");
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("net JSON: ") + e.what());
  }
}

}  // namespace gchain
