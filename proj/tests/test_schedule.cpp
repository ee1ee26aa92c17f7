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

#include <algorithm>
#include <cmath>
#include <optional>
#include <set>
#include <vector>

#include "abcpmc/random.hpp"
#include "abcpmc/schedule.hpp"

namespace {

using namespace abcpmc;

TEST(DistanceQuantile, InterpolatedOrderStatistics) {
  const std::vector<double> d{1.0, 2.0, 3.0, 4.0};
  EXPECT_DOUBLE_EQ(distance_quantile(d, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(distance_quantile(d, 0.25), 1.75);
  EXPECT_DOUBLE_EQ(distance_quantile(d, 1.0), 4.0);
  EXPECT_THROW(distance_quantile(std::vector<double>{}, 0.5), std::invalid_argument);
}

TEST(DistanceQuantile, MonotoneInQ) {
  RngStream rng(5, stream_domain(StreamPurpose::generic), 0);
  std::vector<double> d(257);
  for (double& x : d) x = rng.uniform01() * 10.0;
  double prev = 0.0;
  for (double q = 0.05; q <= 1.0; q += 0.05) {
    const double v = distance_quantile(d, q);
    EXPECT_GE(v, prev);
    prev = v;
  }
}

// The stop rule fires at the first proposed quantile above the threshold once
// three iterations are complete. A fabricated sequence 0.20, 0.15, 0.45,
// 0.999 therefore stops right after the fourth iteration.
TEST(AdaptiveDecision, StopsAfterFourthIterationOnFabricatedSequence) {
  const AdaptivePolicy policy;
  const std::vector<double> q_sequence{0.20, 0.15, 0.45, 0.999};
  double epsilon = 4.0;
  const auto accepted_distances = [](double eps) {
    std::vector<double> d(8);
    for (std::size_t i = 0; i < d.size(); ++i) {
      d[i] = eps * static_cast<double>(i + 1) / static_cast<double>(d.size());
    }
    return d;
  };
  for (int t = 1; t <= 4; ++t) {
    const auto distances = accepted_distances(epsilon);
    const auto decision = detail::decide_from_quantile(q_sequence[t - 1], distances, epsilon, t,
                                                       policy);
    if (t < 4) {
      ASSERT_TRUE(std::holds_alternative<ContinueDecision>(decision)) << "iteration " << t;
      epsilon = std::get<ContinueDecision>(decision).next_epsilon;
    } else {
      ASSERT_TRUE(std::holds_alternative<StopDecision>(decision));
    }
  }
}

TEST(AdaptiveDecision, NeverStopsBeforeMinimumIteration) {
  const AdaptivePolicy policy;
  const std::vector<double> distances{1.0, 2.0, 3.0, 4.0};
  for (int t = 1; t < policy.min_stop_iteration; ++t) {
    const auto decision = detail::decide_from_quantile(0.9999, distances, 4.0, t, policy);
    ASSERT_TRUE(std::holds_alternative<ContinueDecision>(decision)) << "iteration " << t;
    EXPECT_LT(std::get<ContinueDecision>(decision).next_epsilon, 4.0);
  }
}

TEST(AdaptiveDecision, MedianShrinkOnDistances) {
  const AdaptivePolicy policy;
  const std::vector<double> distances{1.0, 2.0, 3.0, 4.0};
  const auto decision = detail::decide_from_quantile(0.5, distances, 4.0, 2, policy);
  ASSERT_TRUE(std::holds_alternative<ContinueDecision>(decision));
  EXPECT_DOUBLE_EQ(std::get<ContinueDecision>(decision).next_epsilon, 2.5);
}

TEST(AdaptiveNext, IdenticalSamplesStopOnceGateOpens) {
  RngStream rng(9, stream_domain(StreamPurpose::generic), 0);
  std::vector<Parameter> sample(600);
  for (auto& x : sample) x = {rng.normal()};
  std::vector<double> distances(600);
  for (double& d : distances) d = rng.uniform01();

  AdaptivePolicy policy;
  policy.ratio_config.seed = 4;
  const auto decision = adaptive_next(sample, sample, distances, policy, 3, 1.5);
  ASSERT_TRUE(std::holds_alternative<StopDecision>(decision));
}

TEST(AdaptiveNext, ConcentratedSampleShrinksTolerance) {
  RngStream rng(10, stream_domain(StreamPurpose::generic), 0);
  std::vector<Parameter> wide(800), narrow(800);
  for (auto& x : wide) x = {2.0 * rng.normal()};
  for (auto& x : narrow) x = {0.5 * rng.normal()};
  std::vector<double> distances(800);
  for (double& d : distances) d = rng.uniform01();

  AdaptivePolicy policy;
  policy.ratio_config.seed = 4;
  const auto decision = adaptive_next(wide, narrow, distances, policy, 3, 1.5);
  ASSERT_TRUE(std::holds_alternative<ContinueDecision>(decision));
  const auto& cont = std::get<ContinueDecision>(decision);
  ASSERT_TRUE(cont.q_used.has_value());
  // The narrow posterior is about four times taller, so the proposed
  // quantile sits well below one half.
  EXPECT_LT(*cont.q_used, 0.5);
  EXPECT_LT(cont.next_epsilon, 1.5);
}

double oracle_truncated_ess(std::span<const double> weights, std::span<const double> distances,
                            double eps) {
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (distances[i] <= eps) {
      sum += weights[i];
      sum_sq += weights[i] * weights[i];
    }
  }
  if (sum <= 0.0 || sum_sq <= 0.0) return 0.0;
  return sum * sum / sum_sq;
}

// Brute-force realization of the contract: smallest breakpoint whose
// truncated, renormalized weights keep the effective size at the target.
std::optional<double> oracle_ess_next(std::span<const double> weights,
                                      std::span<const double> distances, double alpha) {
  const double target = alpha * ess(weights);
  std::set<double> breakpoints(distances.begin(), distances.end());
  for (const double eps : breakpoints) {
    if (oracle_truncated_ess(weights, distances, eps) >= target) return eps;
  }
  return std::nullopt;
}

TEST(EssNext, UniformWeightsKeepHalf) {
  const std::vector<double> weights(4, 0.25);
  const std::vector<double> distances{1.0, 2.0, 3.0, 4.0};
  const auto r = ess_next(weights, distances, 0.5);
  EXPECT_DOUBLE_EQ(r.epsilon, 2.0);
  EXPECT_FALSE(r.floor_hit);
}

TEST(EssNext, AlphaNearOneReturnsMaxDistance) {
  const std::vector<double> weights(6, 1.0 / 6.0);
  const std::vector<double> distances{0.5, 1.5, 2.5, 3.5, 4.5, 5.5};
  const auto r = ess_next(weights, distances, 0.999);
  EXPECT_DOUBLE_EQ(r.epsilon, 5.5);
}

TEST(EssNext, OneHotWeightReturnsItsDistance) {
  const std::vector<double> weights{0.0, 1.0, 0.0};
  const std::vector<double> distances{0.2, 1.7, 3.0};
  const auto r = ess_next(weights, distances, 0.5);
  EXPECT_DOUBLE_EQ(r.epsilon, 1.7);
}

TEST(EssNext, MatchesEnumerationOnRandomSystems) {
  RngStream rng(31, stream_domain(StreamPurpose::generic), 0);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 2 + static_cast<std::size_t>(rng.uniform01() * 15);
    std::vector<double> raw(n), distances(n);
    for (std::size_t i = 0; i < n; ++i) {
      raw[i] = std::pow(rng.uniform01(), 3.0) + 1e-6;
      distances[i] = std::floor(rng.uniform01() * 6.0);  // integer ties included
    }
    const auto weights = normalize_weights(raw);
    const double alpha = 0.05 + 0.9 * rng.uniform01();
    const auto got = ess_next(weights, distances, alpha);
    const auto expected = oracle_ess_next(weights, distances, alpha);
    if (expected) {
      EXPECT_FALSE(got.floor_hit);
      EXPECT_DOUBLE_EQ(got.epsilon, *expected) << "trial " << trial;
    } else {
      EXPECT_TRUE(got.floor_hit);
    }
  }
}

TEST(TarCurve, SaturatedToleranceAcceptsEverything) {
  // Synthetic proposal distances, uniform on (0, 1).
  const auto simulate = [](RngStream& rng) { return rng.uniform01(); };
  const std::vector<double> grid{0.25, 0.5, 0.75, 1.0};
  const auto curve = tar_curve(grid, 20, 500, simulate, 3, 1);
  EXPECT_DOUBLE_EQ(curve.back().acceptance_rate, 1.0);
  for (std::size_t g = 1; g < curve.size(); ++g) {
    EXPECT_GE(curve[g].acceptance_rate, curve[g - 1].acceptance_rate);
  }
  for (const auto& p : curve) {
    EXPECT_GE(p.acceptance_rate, 0.0);
    EXPECT_LE(p.acceptance_rate, 1.0);
  }
  EXPECT_NEAR(curve.front().acceptance_rate, 0.25, 0.02);
}

TEST(TarCurve, DeterministicAcrossCalls) {
  const auto simulate = [](RngStream& rng) { return rng.uniform01() * 3.0; };
  const std::vector<double> grid{0.5, 1.0, 1.5, 2.0, 2.5};
  const auto a = tar_curve(grid, 7, 200, simulate, 11, 4);
  const auto b = tar_curve(grid, 7, 200, simulate, 11, 4);
  for (std::size_t g = 0; g < grid.size(); ++g) {
    EXPECT_EQ(a[g].acceptance_rate, b[g].acceptance_rate);
  }
}

// For this L-shaped curve the point farthest from the endpoint chord (after
// min-max normalization) is (2, 0.1), the base of the steep rise.
TEST(TarElbow, LShapedCurve) {
  const std::vector<TarPoint> curve{{0.0, 0.0}, {1.0, 0.05}, {2.0, 0.1}, {2.2, 0.9}, {3.0, 1.0}};
  const auto elbow = tar_elbow(curve);
  ASSERT_TRUE(elbow.has_value());
  EXPECT_DOUBLE_EQ(*elbow, 2.0);
}

TEST(TarElbow, LinearCurveHasNoElbow) {
  std::vector<TarPoint> curve;
  for (int i = 0; i <= 10; ++i) {
    curve.push_back({static_cast<double>(i), 0.1 * i});
  }
  EXPECT_FALSE(tar_elbow(curve).has_value());
}

TEST(TarElbow, RequiresThreeIncreasingPoints) {
  EXPECT_THROW(tar_elbow(std::vector<TarPoint>{{0.0, 0.0}, {1.0, 1.0}}), std::invalid_argument);
  EXPECT_THROW(tar_elbow(std::vector<TarPoint>{{0.0, 0.0}, {1.0, 0.5}, {0.5, 1.0}}),
               std::invalid_argument);
}

}  // namespace
