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

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "abcpmc/density.hpp"
#include "abcpmc/random.hpp"

namespace {

using namespace abcpmc;

// Equally spaced sample rescaled to unit weighted standard deviation; its
// IQR/1.34 exceeds one, so the bandwidth rule reduces to 0.9 * n^(-1/5).
TEST(SilvermanBandwidth, UnitSpreadSample) {
  const std::size_t n = 1000;
  std::vector<double> points(n), weights(n, 1.0 / n);
  for (std::size_t i = 0; i < n; ++i) {
    points[i] = -1.0 + 2.0 * (static_cast<double>(i) + 0.5) / n;
  }
  double var = 0.0;
  for (double x : points) var += x * x / n;
  const double sd = std::sqrt(var);
  for (double& x : points) x /= sd;

  const double h = silverman_bandwidth(points, weights);
  EXPECT_NEAR(h, 0.9 * std::pow(1000.0, -0.2), 1e-12);  // = 0.22607
}

TEST(SilvermanBandwidth, ZeroSpreadSampleIsAnError) {
  const std::vector<double> points(50, 3.0);
  const std::vector<double> weights(50, 0.02);
  EXPECT_THROW(silverman_bandwidth(points, weights), std::runtime_error);
}

TEST(SilvermanBandwidth, TranslationInvariantAndScaleEquivariant) {
  RngStream rng(12, stream_domain(StreamPurpose::generic), 0);
  std::vector<double> points(400), weights(400);
  for (std::size_t i = 0; i < points.size(); ++i) {
    points[i] = rng.normal() * 2.3 + 0.7;
    weights[i] = 0.1 + rng.uniform01();
  }
  const double h = silverman_bandwidth(points, weights);

  auto shifted = points;
  for (double& x : shifted) x += 41.0;
  EXPECT_NEAR(silverman_bandwidth(shifted, weights), h, 1e-9 * h);

  for (const double c : {0.2, 3.7}) {
    auto scaled = points;
    for (double& x : scaled) x *= c;
    EXPECT_NEAR(silverman_bandwidth(scaled, weights), c * h, 1e-9 * h);
  }
}

TEST(KdePdf, SinglePointKernelValue) {
  const Kde1D kde{{0.0}, {1.0}, 1.0};
  EXPECT_NEAR(kde_pdf(kde, 0.0), 0.3989422804014327, 1e-15);
}

TEST(KdePdf, WideGridIntegralIsOne) {
  RngStream rng(8, stream_domain(StreamPurpose::generic), 0);
  Kde1D kde;
  for (int i = 0; i < 300; ++i) {
    kde.points.push_back(rng.normal() * 1.7 - 0.4);
    kde.weights.push_back(1.0 / 300.0);
  }
  kde.bandwidth = silverman_bandwidth(kde.points, kde.weights);
  const auto [mn, mx] = std::minmax_element(kde.points.begin(), kde.points.end());
  const auto grid = linspace(*mn - 6.0 * kde.bandwidth, *mx + 6.0 * kde.bandwidth, 2048);
  const auto density = kde_on_grid(kde, grid);
  for (double v : density.values) ASSERT_GE(v, 0.0);
  EXPECT_NEAR(trapezoid(density), 1.0, 0.01);
}

TEST(KdePdf, TwoPointSymmetry) {
  const Kde1D kde{{-1.0, 1.0}, {0.5, 0.5}, 1.0};
  EXPECT_DOUBLE_EQ(kde_pdf(kde, 1.0), kde_pdf(kde, -1.0));
  EXPECT_DOUBLE_EQ(kde_pdf(kde, 0.3), kde_pdf(kde, -0.3));
}

TEST(Hellinger, IdenticalDensitiesGiveZero) {
  const auto grid = linspace(-5.0, 5.0, 512);
  GriddedDensity p;
  p.grid = grid;
  for (double x : grid) p.values.push_back(normal_pdf(x));
  EXPECT_DOUBLE_EQ(hellinger(p, p), 0.0);
}

TEST(Hellinger, DisjointSupportsGiveSqrtTwo) {
  const auto grid = linspace(0.0, 10.0, 1000);
  GriddedDensity p, q;
  p.grid = q.grid = grid;
  p.values.assign(grid.size(), 0.0);
  q.values.assign(grid.size(), 0.0);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (grid[i] < 4.0) p.values[i] = 1.0;
    if (grid[i] > 6.0) q.values[i] = 1.0;
  }
  EXPECT_NEAR(hellinger(p, q), std::sqrt(2.0), 1e-9);
}

// Between N(0,1) and N(1,1) the Bhattacharyya coefficient is exp(-1/8), so
// H = sqrt(2 (1 - exp(-1/8))) = 0.48477. The gridded evaluation must agree.
TEST(Hellinger, ShiftedNormalsMatchAnalyticValue) {
  const auto grid = linspace(-8.0, 9.0, 4096);
  GriddedDensity p, q;
  p.grid = q.grid = grid;
  for (double x : grid) {
    p.values.push_back(normal_pdf(x));
    q.values.push_back(normal_pdf(x - 1.0));
  }
  const double analytic = std::sqrt(2.0 * (1.0 - std::exp(-0.125)));
  EXPECT_NEAR(hellinger(p, q), analytic, 1e-3);
  EXPECT_NEAR(analytic, 0.4848, 1e-4);
}

TEST(Hellinger, SymmetricAndBounded) {
  RngStream rng(21, stream_domain(StreamPurpose::generic), 0);
  const auto grid = linspace(-3.0, 3.0, 301);
  for (int trial = 0; trial < 25; ++trial) {
    GriddedDensity p, q;
    p.grid = q.grid = grid;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      p.values.push_back(rng.uniform01());
      q.values.push_back(rng.uniform01());
    }
    const double h1 = hellinger(p, q);
    const double h2 = hellinger(q, p);
    EXPECT_DOUBLE_EQ(h1, h2);
    EXPECT_GE(h1, 0.0);
    EXPECT_LE(h1, std::sqrt(2.0) + 1e-12);
  }
}

TEST(Hellinger, GridMismatchIsAnError) {
  GriddedDensity p, q;
  p.grid = linspace(0.0, 1.0, 16);
  q.grid = linspace(0.0, 2.0, 16);
  p.values.assign(16, 1.0);
  q.values.assign(16, 1.0);
  EXPECT_THROW(hellinger(p, q), std::invalid_argument);
}

TEST(WeightedQuantile, EqualWeightsMedian) {
  const std::vector<double> points{4.0, 1.0, 3.0, 2.0};
  const std::vector<double> weights(4, 0.25);
  const double median = weighted_quantile(points, weights, 0.5);
  EXPECT_GE(median, 1.0);
  EXPECT_LE(median, 3.0);
  EXPECT_DOUBLE_EQ(weighted_quantile(points, weights, 1.0), 4.0);
}

}  // namespace
