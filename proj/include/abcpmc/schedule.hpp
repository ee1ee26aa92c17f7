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

#ifndef ABCPMC_SCHEDULE_HPP_
#define ABCPMC_SCHEDULE_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "abcpmc/core.hpp"
#include "abcpmc/random.hpp"
#include "abcpmc/ratio.hpp"

/**
 * \file
 * \brief Tolerance-schedule policies and stopping decisions.
 *
 * The adaptive policy shrinks the tolerance by the quantile 1/c, where c is
 * the supremum of the estimated density ratio between the two most recent
 * particle generations, and stops once that quantile exceeds a threshold.
 * Fixed-sequence, fixed-quantile, effective-sample-size and
 * threshold-acceptance-rate policies are provided as baselines.
 */

namespace abcpmc {

struct AdaptivePolicy {
  double q_stop = 0.99;
  int min_stop_iteration = 3;  ///< earliest completed iteration allowed to stop
  RatioFitConfig ratio_config;
};

struct FixedSequencePolicy {
  std::vector<double> epsilons;  ///< strictly decreasing, including the first tolerance
};

struct FixedQuantilePolicy {
  double q;
};

struct EssPolicy {
  double alpha;
};

struct TarPolicy {
  int grid_size = 100;
  int replicates = 100;
  int draws_per_replicate = 1000;
};

using SchedulerPolicy =
    std::variant<AdaptivePolicy, FixedSequencePolicy, FixedQuantilePolicy, EssPolicy, TarPolicy>;

inline std::string policy_name(const SchedulerPolicy& policy) {
  struct Visitor {
    std::string operator()(const AdaptivePolicy&) const { return "adaptive"; }
    std::string operator()(const FixedSequencePolicy&) const { return "fixed-sequence"; }
    std::string operator()(const FixedQuantilePolicy& p) const {
      return "fixed-quantile(" + std::to_string(p.q) + ")";
    }
    std::string operator()(const EssPolicy& p) const {
      return "ess(" + std::to_string(p.alpha) + ")";
    }
    std::string operator()(const TarPolicy&) const { return "tar"; }
  };
  return std::visit(Visitor{}, policy);
}

struct ContinueDecision {
  double next_epsilon;
  std::optional<double> q_used;
};

struct StopDecision {
  std::string reason;
};

using ScheduleDecision = std::variant<ContinueDecision, StopDecision>;

/// Empirical quantile with linear interpolation between order statistics
/// (position (n-1)q + 1); q = 1 returns the maximum.
inline double distance_quantile(std::span<const double> distances, double q) {
  if (distances.empty()) throw std::invalid_argument("distance_quantile: empty input");
  if (!(q > 0.0 && q <= 1.0)) throw std::invalid_argument("distance_quantile: q outside (0,1]");
  std::vector<double> sorted(distances.begin(), distances.end());
  std::sort(sorted.begin(), sorted.end());
  const double pos = (static_cast<double>(sorted.size()) - 1.0) * q;
  const std::size_t k = static_cast<std::size_t>(pos);
  if (k + 1 >= sorted.size()) return sorted.back();
  const double frac = pos - static_cast<double>(k);
  return sorted[k] + frac * (sorted[k + 1] - sorted[k]);
}

namespace detail {

/// Shrink applied when the ratio proposes a quantile above the stop threshold
/// while stopping is not yet allowed. A near-unit quantile would stall the
/// sampler, and early iterations that look flat usually mean the first
/// tolerance is still in the saturated regime where every proposal is
/// accepted; the conventional median shrink moves out of it.
inline constexpr double kPreGateFallbackQuantile = 0.5;

/// Turns an estimated quantile into a schedule decision; shared by the
/// adaptive policy and its tests.
inline ScheduleDecision decide_from_quantile(double q, std::span<const double> curr_distances,
                                             double current_epsilon, int completed_iterations,
                                             const AdaptivePolicy& policy) {
  if (q > policy.q_stop) {
    if (completed_iterations >= policy.min_stop_iteration) {
      return StopDecision{"posterior stabilized: proposed quantile " + std::to_string(q) +
                          " > " + std::to_string(policy.q_stop)};
    }
    const double next = distance_quantile(curr_distances, kPreGateFallbackQuantile);
    if (!(next < current_epsilon)) {
      return StopDecision{"tolerance stalled at " + std::to_string(current_epsilon)};
    }
    return ContinueDecision{next, q};
  }
  const double next = distance_quantile(curr_distances, q);
  if (!(next < current_epsilon)) {
    return StopDecision{"tolerance stalled at " + std::to_string(current_epsilon)};
  }
  return ContinueDecision{next, q};
}

}  // namespace detail

/// Adaptive decision at the end of an iteration: fit the density ratio of the
/// current posterior sample over the previous one, take the supremum over the
/// pooled bounding box, and shrink by its reciprocal (or stop).
inline ScheduleDecision adaptive_next(std::span<const Parameter> prev_sample,
                                      std::span<const Parameter> curr_sample,
                                      std::span<const double> curr_distances,
                                      const AdaptivePolicy& policy, int completed_iterations,
                                      double current_epsilon) {
  if (prev_sample.empty() || curr_sample.empty()) {
    throw std::invalid_argument("adaptive_next: empty sample");
  }
  const auto model = kliep_fit(curr_sample, prev_sample, policy.ratio_config);

  const std::size_t dim = curr_sample.front().size();
  std::vector<std::pair<double, double>> box(dim);
  for (std::size_t j = 0; j < dim; ++j) {
    double lo = curr_sample.front()[j];
    double hi = lo;
    for (const auto& x : curr_sample) {
      lo = std::min(lo, x[j]);
      hi = std::max(hi, x[j]);
    }
    for (const auto& x : prev_sample) {
      lo = std::min(lo, x[j]);
      hi = std::max(hi, x[j]);
    }
    if (!(hi > lo)) hi = lo + std::max(1e-12, std::abs(lo) * 1e-12);
    box[j] = {lo, hi};
  }
  const double c_hat = ratio_sup(model, box);
  const double q = adaptive_quantile(c_hat);
  return detail::decide_from_quantile(q, curr_distances, current_epsilon, completed_iterations,
                                      policy);
}

struct EssShrinkResult {
  double epsilon;
  /// Set when the target effective size was unreachable and the tolerance
  /// keeping a single particle was returned instead.
  bool floor_hit = false;
};

/// Smallest tolerance whose truncated-and-renormalized weights keep the
/// effective sample size at or above alpha times the current one.
///
/// The truncated ESS is piecewise constant with breakpoints at the distances,
/// so the crossing is located exactly on the sorted breakpoints.
inline EssShrinkResult ess_next(std::span<const double> weights, std::span<const double> distances,
                                double alpha) {
  if (weights.size() != distances.size() || weights.empty()) {
    throw std::invalid_argument("ess_next: bad input sizes");
  }
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("ess_next: alpha outside (0,1)");
  const double target = alpha * ess(weights);

  std::vector<std::size_t> order(weights.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return distances[a] < distances[b]; });

  double sum = 0.0;
  double sum_sq = 0.0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    sum += weights[order[k]];
    sum_sq += weights[order[k]] * weights[order[k]];
    // Ties share a breakpoint; only evaluate once all equal distances are in.
    if (k + 1 < order.size() && distances[order[k + 1]] == distances[order[k]]) continue;
    if (sum > 0.0 && sum_sq > 0.0) {
      const double truncated_ess = (sum * sum) / sum_sq;
      if (truncated_ess >= target) {
        return {distances[order[k]], false};
      }
    }
  }
  // Unreachable target: keep the single nearest particle.
  double floor_eps = distances[order.front()];
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (weights[order[k]] > 0.0) {
      floor_eps = distances[order[k]];
      break;
    }
  }
  return {floor_eps, true};
}

/// One point of a threshold-acceptance-rate curve.
struct TarPoint {
  double tolerance;
  double acceptance_rate;
};

/// Monte Carlo estimate of the acceptance rate at each grid tolerance.
///
/// `simulate_distance` runs one proposal through the forward model and
/// returns its distance; it is called with a fresh deterministic stream per
/// (replicate, draw), so replicates can run in any order. Each replicate's
/// draws are shared across all grid tolerances.
inline std::vector<TarPoint> tar_curve(
    std::span<const double> grid, int replicates, int draws_per_replicate,
    const std::function<double(RngStream&)>& simulate_distance, std::uint64_t seed,
    std::uint64_t iteration) {
  if (grid.empty()) throw std::invalid_argument("tar_curve: empty grid");
  if (replicates < 1 || draws_per_replicate < 1) {
    throw std::invalid_argument("tar_curve: need at least one replicate and draw");
  }
  std::vector<double> mean_rate(grid.size(), 0.0);
  std::vector<double> draws(draws_per_replicate);
  for (int r = 0; r < replicates; ++r) {
    for (int i = 0; i < draws_per_replicate; ++i) {
      RngStream rng(seed, stream_domain(StreamPurpose::tar_probe, iteration,
                                        static_cast<std::uint64_t>(r)),
                    static_cast<std::uint64_t>(i));
      draws[i] = simulate_distance(rng);
    }
    for (std::size_t g = 0; g < grid.size(); ++g) {
      int accepted = 0;
      for (const double d : draws) accepted += (d <= grid[g]) ? 1 : 0;
      mean_rate[g] += static_cast<double>(accepted) / static_cast<double>(draws_per_replicate);
    }
  }
  std::vector<TarPoint> curve(grid.size());
  for (std::size_t g = 0; g < grid.size(); ++g) {
    curve[g] = {grid[g], mean_rate[g] / static_cast<double>(replicates)};
  }
  return curve;
}

/// Elbow of a threshold-acceptance-rate curve: the point with the largest
/// perpendicular distance to the chord joining the endpoints after min-max
/// normalizing both axes. A near-linear curve (max distance < 0.01) has no
/// elbow.
inline std::optional<double> tar_elbow(std::span<const TarPoint> curve) {
  if (curve.size() < 3) throw std::invalid_argument("tar_elbow: need at least three points");
  for (std::size_t i = 1; i < curve.size(); ++i) {
    if (!(curve[i].tolerance > curve[i - 1].tolerance)) {
      throw std::invalid_argument("tar_elbow: tolerances must be increasing");
    }
  }
  double ymin = curve.front().acceptance_rate;
  double ymax = ymin;
  for (const auto& p : curve) {
    ymin = std::min(ymin, p.acceptance_rate);
    ymax = std::max(ymax, p.acceptance_rate);
  }
  const double xmin = curve.front().tolerance;
  const double xmax = curve.back().tolerance;
  if (!(xmax > xmin) || !(ymax > ymin)) return std::nullopt;

  const auto norm = [&](const TarPoint& p) {
    return std::pair<double, double>{(p.tolerance - xmin) / (xmax - xmin),
                                     (p.acceptance_rate - ymin) / (ymax - ymin)};
  };
  const auto [x0, y0] = norm(curve.front());
  const auto [x1, y1] = norm(curve.back());
  const double chord_len = std::hypot(x1 - x0, y1 - y0);
  if (!(chord_len > 0.0)) return std::nullopt;

  double best_dist = -1.0;
  double best_tol = curve.front().tolerance;
  for (const auto& p : curve) {
    const auto [x, y] = norm(p);
    const double dist = std::abs((x1 - x0) * (y0 - y) - (x0 - x) * (y1 - y0)) / chord_len;
    if (dist > best_dist) {
      best_dist = dist;
      best_tol = p.tolerance;
    }
  }
  if (best_dist < 0.01) return std::nullopt;
  return best_tol;
}

}  // namespace abcpmc

#endif  // ABCPMC_SCHEDULE_HPP_
