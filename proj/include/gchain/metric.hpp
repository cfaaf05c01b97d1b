#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gchain/errors.hpp"

namespace gchain {

/// Dense symmetric distance matrix, row-major.
class DistanceMatrix {
 public:
  DistanceMatrix() = default;
  explicit DistanceMatrix(std::size_t n) : n_(n), data_(n * n, 0.0) {}

  static DistanceMatrix from_rows(const std::vector<std::vector<double>>& rows) {
    DistanceMatrix m(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != rows.size()) throw DataError("distance matrix is not square");
      std::copy(rows[i].begin(), rows[i].end(), m.data_.begin() + static_cast<std::ptrdiff_t>(i * m.n_));
    }
    return m;
  }

  [[nodiscard]] std::size_t size() const noexcept { return n_; }
  double operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * n_ + j]; }
  double& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * n_ + j]; }

  [[nodiscard]] double diameter() const noexcept {
    return data_.empty() ? 0.0 : *std::max_element(data_.begin(), data_.end());
  }

  [[nodiscard]] DistanceMatrix scaled(double c) const {
    DistanceMatrix out = *this;
    for (double& v : out.data_) v *= c;
    return out;
  }

 private:
  std::size_t n_ = 0;
  std::vector<double> data_;
};

/// Symmetric, zero diagonal, nonnegative, triangle inequality up to `tol`
/// (relative to the size of the right-hand side, absolute below 1).
inline bool validate_metric(const DistanceMatrix& d, double tol = 1e-12) {
  const std::size_t n = d.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (d(i, i) != 0.0) return false;
    for (std::size_t j = 0; j < n; ++j) {
      const double v = d(i, j);
      if (!std::isfinite(v) || v < 0.0 || v != d(j, i)) return false;
    }
  }
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t c = 0; c < n; ++c) {
        const double rhs = d(a, b) + d(b, c);
        if (d(a, c) > rhs + tol * std::max(1.0, rhs)) return false;
      }
  return true;
}

inline bool validate_metric(const std::vector<std::vector<double>>& rows, double tol = 1e-12) {
  return validate_metric(DistanceMatrix::from_rows(rows), tol);
}

/// Point set carrying one distance, or two distances with exponents (p1, p2)
/// for the two-distance regime.
struct FiniteMetricSpace {
  std::vector<std::string> points;
  DistanceMatrix d1;
  std::optional<DistanceMatrix> d2;
  double p1 = 1.0;
  double p2 = 1.0;

  static FiniteMetricSpace one(DistanceMatrix d, std::vector<std::string> ids = {}) {
    FiniteMetricSpace s;
    s.points = ids.empty() ? default_ids(d.size()) : std::move(ids);
    s.d1 = std::move(d);
    s.check();
    return s;
  }

  static FiniteMetricSpace two(DistanceMatrix a, DistanceMatrix b, double p1, double p2,
                               std::vector<std::string> ids = {}) {
    if (a.size() != b.size()) throw DataError("two-distance space: matrix dimensions differ");
    if (!(p1 > 0.0) || !(p2 > 0.0)) throw ArgumentError("two-distance space: exponents must be positive");
    FiniteMetricSpace s;
    s.points = ids.empty() ? default_ids(a.size()) : std::move(ids);
    s.d1 = std::move(a);
    s.d2 = std::move(b);
    s.p1 = p1;
    s.p2 = p2;
    s.check();
    return s;
  }

  [[nodiscard]] std::size_t size() const noexcept { return d1.size(); }
  [[nodiscard]] bool two_distance() const noexcept { return d2.has_value(); }

  /// j in {1, 2}.
  [[nodiscard]] const DistanceMatrix& metric(int j) const {
    if (j == 1) return d1;
    if (j == 2 && d2) return *d2;
    throw ArgumentError("metric index out of range");
  }

  [[nodiscard]] double exponent(int j) const {
    if (j == 1) return p1;
    if (j == 2 && d2) return p2;
    throw ArgumentError("metric index out of range");
  }

  /// Points s != t at distance zero in every metric.
  [[nodiscard]] bool coincident(std::size_t s, std::size_t t) const noexcept {
    return d1(s, t) == 0.0 && (!d2 || (*d2)(s, t) == 0.0);
  }

 private:
  static std::vector<std::string> default_ids(std::size_t n) {
    std::vector<std::string> ids(n);
    for (std::size_t i = 0; i < n; ++i) ids[i] = std::to_string(i);
    return ids;
  }

  void check() const {
    if (points.size() != d1.size()) throw DataError("point identifiers do not match the matrix size");
    if (!validate_metric(d1)) throw DataError("first distance matrix is not a metric");
    if (d2 && !validate_metric(*d2)) throw DataError("second distance matrix is not a metric");
  }
};

/// Result of merging points at zero distance: `representative[i]` is the
/// index in `space` that stands for original point i.
struct MergedSpace {
  FiniteMetricSpace space;
  std::vector<std::size_t> representative;
};

inline MergedSpace merge_coincident(const FiniteMetricSpace& in) {
  const std::size_t n = in.size();
  std::vector<std::size_t> keep;
  std::vector<std::size_t> rep(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto it = std::find_if(keep.begin(), keep.end(), [&](std::size_t k) { return in.coincident(i, k); });
    if (it == keep.end()) {
      rep[i] = keep.size();
      keep.push_back(i);
    } else {
      rep[i] = static_cast<std::size_t>(it - keep.begin());
    }
  }
  auto restrict = [&](const DistanceMatrix& d) {
    DistanceMatrix out(keep.size());
    for (std::size_t a = 0; a < keep.size(); ++a)
      for (std::size_t b = 0; b < keep.size(); ++b) out(a, b) = d(keep[a], keep[b]);
    return out;
  };
  std::vector<std::string> ids;
  ids.reserve(keep.size());
  for (std::size_t k : keep) ids.push_back(in.points[k]);
  MergedSpace out{in.two_distance() ? FiniteMetricSpace::two(restrict(in.d1), restrict(*in.d2), in.p1, in.p2, ids)
                                    : FiniteMetricSpace::one(restrict(in.d1), ids),
                  std::move(rep)};
  return out;
}

/// Pairwise l2 distances between the rows of `coords`, times `scale`.
inline DistanceMatrix euclidean_distances(const std::vector<std::vector<double>>& coords, double scale = 1.0) {
  DistanceMatrix d(coords.size());
  for (std::size_t i = 0; i < coords.size(); ++i)
    for (std::size_t j = i + 1; j < coords.size(); ++j) {
      if (coords[i].size() != coords[j].size()) throw DataError("points have different dimensions");
      double acc = 0.0;
      for (std::size_t k = 0; k < coords[i].size(); ++k) {
        const double diff = coords[i][k] - coords[j][k];
        acc += diff * diff;
      }
      d(i, j) = d(j, i) = scale * std::sqrt(acc);
    }
  return d;
}

/// Pairwise l-infinity distances, times `scale`.
inline DistanceMatrix sup_distances(const std::vector<std::vector<double>>& coords, double scale = 1.0) {
  DistanceMatrix d(coords.size());
  for (std::size_t i = 0; i < coords.size(); ++i)
    for (std::size_t j = i + 1; j < coords.size(); ++j) {
      if (coords[i].size() != coords[j].size()) throw DataError("points have different dimensions");
      double acc = 0.0;
      for (std::size_t k = 0; k < coords[i].size(); ++k) acc = std::max(acc, std::fabs(coords[i][k] - coords[j][k]));
      d(i, j) = d(j, i) = scale * acc;
    }
  return d;
}

}  // namespace gchain
