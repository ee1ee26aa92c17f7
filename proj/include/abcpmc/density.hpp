// Copyright 2026 The abcpmc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef ABCPMC_DENSITY_HPP_
#define ABCPMC_DENSITY_HPP_

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "abcpmc/core.hpp"

/**
 * \file
 * \brief Weighted 1-D kernel density estimation and Hellinger distance between
 * gridded densities.
 */

namespace abcpmc {

/// Weighted Gaussian KDE of a 1-D sample.
struct Kde1D {
  std::vector<double> points;
  std::vector<double> weights;  ///< normalized
  double bandwidth = 0.0;
};

/// A density tabulated on a strictly increasing grid.
struct GriddedDensity {
  std::vector<double> grid;
  std::vector<double> values;
};

inline std::vector<double> linspace(double lo, double hi, std::size_t m) {
  if (m < 2) throw std::invalid_argument("linspace: need at least two points");
  std::vector<double> g(m);
  const double step = (hi - lo) / static_cast<double>(m - 1);
  for (std::size_t i = 0; i < m; ++i) g[i] = lo + step * static_cast<double>(i);
  g.back() = hi;
  return g;
}

/// Weighted quantile by cumulative-weight inversion with linear interpolation
/// between adjacent order statistics.
inline double weighted_quantile(std::span<const double> points, std::span<const double> weights,
                                double q) {
  if (points.empty() || points.size() != weights.size()) {
    throw std::invalid_argument("weighted_quantile: bad input sizes");
  }
  if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("weighted_quantile: q outside [0,1]");
  std::vector<std::size_t> order(points.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return points[a] < points[b]; });
  double total = 0.0;
  for (double w : weights) total += w;
  if (total <= 0.0) throw std::invalid_argument("weighted_quantile: zero total weight");

  double cum_prev = 0.0;
  double x_prev = points[order.front()];
  double cum = 0.0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    cum += weights[order[k]] / total;
    const double x = points[order[k]];
    if (cum >= q) {
      if (k == 0 || cum == cum_prev) return x;
      const double t = (q - cum_prev) / (cum - cum_prev);
      return x_prev + t * (x - x_prev);
    }
    if (weights[order[k]] > 0.0) {
      cum_prev = cum;
      x_prev = x;
    }
  }
  return points[order.back()];
}

/// Bandwidth by the robust rule of thumb,
/// h = 0.9 * min(sd, IQR/1.34) * n_eff^(-1/5),
/// with weighted standard deviation, weighted interquartile range and the
/// effective sample size standing in for n.
inline double silverman_bandwidth(std::span<const double> points,
                                  std::span<const double> weights) {
  if (points.size() < 2 || points.size() != weights.size()) {
    throw std::invalid_argument("silverman_bandwidth: need n >= 2 matching points/weights");
  }
  const auto [mn, mx] = std::minmax_element(points.begin(), points.end());
  if (*mn == *mx) {
    throw std::runtime_error("silverman_bandwidth: zero-spread sample");
  }
  const auto w = normalize_weights(weights);
  double mean = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) mean += w[i] * points[i];
  double var = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double c = points[i] - mean;
    var += w[i] * c * c;
  }
  const double sd = std::sqrt(var);
  const double iqr =
      weighted_quantile(points, w, 0.75) - weighted_quantile(points, w, 0.25);

  double spread = std::numeric_limits<double>::infinity();
  if (sd > 0.0) spread = sd;
  if (iqr > 0.0) spread = std::min(spread, iqr / 1.34);
  if (!std::isfinite(spread)) {
    throw std::runtime_error("silverman_bandwidth: zero-spread sample");
  }
  const double n_eff = ess(w);
  return 0.9 * spread * std::pow(n_eff, -0.2);
}

/// Pointwise KDE evaluation with a Gaussian kernel.
inline double kde_pdf(const Kde1D& kde, double x) {
  if (!(kde.bandwidth > 0.0)) throw std::invalid_argument("kde_pdf: bandwidth must be > 0");
  const double inv_h = 1.0 / kde.bandwidth;
  double d = 0.0;
  for (std::size_t i = 0; i < kde.points.size(); ++i) {
    d += kde.weights[i] * inv_h * normal_pdf((x - kde.points[i]) * inv_h);
  }
  return d;
}

inline GriddedDensity kde_on_grid(const Kde1D& kde, std::vector<double> grid) {
  GriddedDensity out;
  out.values.resize(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) out.values[i] = kde_pdf(kde, grid[i]);
  out.grid = std::move(grid);
  return out;
}

/// Trapezoid-rule integral over the grid.
inline double trapezoid(const GriddedDensity& d) {
  if (d.grid.size() != d.values.size() || d.grid.size() < 2) {
    throw std::invalid_argument("trapezoid: bad gridded density");
  }
  double s = 0.0;
  for (std::size_t i = 1; i < d.grid.size(); ++i) {
    s += 0.5 * (d.values[i] + d.values[i - 1]) * (d.grid[i] - d.grid[i - 1]);
  }
  return s;
}

/// Hellinger distance between two densities tabulated on the same grid:
/// sqrt of the integral of (sqrt p - sqrt q)^2. With this convention the
/// range is [0, sqrt 2]; both inputs are renormalized on the grid first.
inline double hellinger(const GriddedDensity& p, const GriddedDensity& q) {
  if (p.grid.size() != q.grid.size()) throw std::invalid_argument("hellinger: grid mismatch");
  for (std::size_t i = 0; i < p.grid.size(); ++i) {
    if (p.grid[i] != q.grid[i]) throw std::invalid_argument("hellinger: grid mismatch");
  }
  const double zp = trapezoid(p);
  const double zq = trapezoid(q);
  if (!(zp > 0.0) || !(zq > 0.0)) throw std::invalid_argument("hellinger: non-normalizable input");

  GriddedDensity integrand;
  integrand.grid = p.grid;
  integrand.values.resize(p.grid.size());
  for (std::size_t i = 0; i < p.grid.size(); ++i) {
    const double a = std::sqrt(std::max(0.0, p.values[i] / zp));
    const double b = std::sqrt(std::max(0.0, q.values[i] / zq));
    integrand.values[i] = (a - b) * (a - b);
  }
  return std::sqrt(std::max(0.0, trapezoid(integrand)));
}

/// Shared evaluation grid for comparing two KDEs: spans the union of both
/// samples' ranges padded by three bandwidths each side.
inline std::vector<double> comparison_grid(const Kde1D& a, const Kde1D& b, std::size_t m = 2048,
                                           double extra_lo = std::numeric_limits<double>::infinity(),
                                           double extra_hi = -std::numeric_limits<double>::infinity()) {
  auto span_of = [](const Kde1D& k) {
    const auto [mn, mx] = std::minmax_element(k.points.begin(), k.points.end());
    return std::pair<double, double>{*mn - 3.0 * k.bandwidth, *mx + 3.0 * k.bandwidth};
  };
  const auto [alo, ahi] = span_of(a);
  const auto [blo, bhi] = span_of(b);
  const double lo = std::min({alo, blo, extra_lo});
  const double hi = std::max({ahi, bhi, extra_hi});
  return linspace(lo, hi, m);
}

}  // namespace abcpmc

#endif  // ABCPMC_DENSITY_HPP_
