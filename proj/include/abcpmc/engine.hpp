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

#ifndef ABCPMC_ENGINE_HPP_
#define ABCPMC_ENGINE_HPP_

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <variant>
#include <vector>

#include "abcpmc/core.hpp"
#include "abcpmc/models.hpp"
#include "abcpmc/random.hpp"
#include "abcpmc/schedule.hpp"

/**
 * \file
 * \brief The sequential sampler driver: initialization by prior oversampling,
 * the per-iteration proposal/acceptance loop, scheduler consultation and
 * accounting.
 *
 * Proposal attempts are numbered by a shared counter and every attempt derives
 * its randomness from (seed, iteration, attempt index) alone, so workers can
 * race ahead freely: acceptances are committed in attempt order, overshoot is
 * discarded, and the resulting trace is identical for any worker count.
 */

namespace abcpmc {

struct RunConfig {
  int n_particles = 1000;
  int oversample = 5;  ///< k: the first generation draws k*N times from the prior
  SchedulerPolicy policy = AdaptivePolicy{};
  int max_iterations = 25;
  std::uint64_t seed = 1;
  int worker_count = 1;
  std::uint64_t attempt_budget = 10'000'000;  ///< per-iteration proposal cap
  int max_sim_retries = 8;
  /// Optional cumulative draw budget; the run stops at the first iteration
  /// boundary at or past it. Used for budget-matched baseline comparisons.
  std::optional<std::uint64_t> total_draw_budget;
};

struct IterationRecord {
  int iteration = 0;
  double epsilon = 0.0;
  std::optional<double> q_used;  ///< quantile that produced this epsilon, if any
  std::uint64_t draws = 0;       ///< simulated proposals this iteration
  double acceptance_rate = 0.0;  ///< n_particles / draws, exactly
  double wall_time_s = 0.0;
  std::uint64_t out_of_support = 0;  ///< proposals rejected before simulation
  std::uint64_t zero_weight = 0;     ///< accepted particles with vanishing kernel density
};

struct RunTrace {
  std::vector<IterationRecord> records;
  std::vector<ParticleSystem> snapshots;  ///< snapshots[i] belongs to records[i]
  std::string stop_reason;
  std::uint64_t total_draws = 0;
  double total_wall_time_s = 0.0;
  /// Simulations spent estimating acceptance-rate curves (not counted in
  /// total_draws, matching how such schedules are usually reported).
  std::uint64_t auxiliary_draws = 0;
  std::vector<std::pair<int, std::vector<TarPoint>>> tar_curves;

  const ParticleSystem& final_system() const {
    if (snapshots.empty()) throw std::logic_error("RunTrace: empty trace");
    return snapshots.back();
  }
  int iterations() const { return static_cast<int>(records.size()); }
};

/// Thrown when an iteration exhausts its attempt budget.
class AcceptanceStarvation : public std::runtime_error {
 public:
  AcceptanceStarvation(int iteration, double epsilon, std::uint64_t attempts,
                       std::size_t accepted, std::size_t needed)
      : std::runtime_error("acceptance starvation at iteration " + std::to_string(iteration) +
                           ": " + std::to_string(accepted) + "/" + std::to_string(needed) +
                           " accepted after " + std::to_string(attempts) +
                           " attempts at tolerance " + std::to_string(epsilon)) {}
};

/// Wraps any failure inside run() together with the trace up to that point.
class RunError : public std::runtime_error {
 public:
  RunError(const std::string& what, RunTrace partial)
      : std::runtime_error(what), partial_(std::make_shared<RunTrace>(std::move(partial))) {}
  const RunTrace& partial_trace() const { return *partial_; }

 private:
  std::shared_ptr<RunTrace> partial_;
};

namespace detail {

enum class Outcome : std::uint8_t { accepted, rejected, out_of_support };

struct AttemptResult {
  Outcome outcome = Outcome::rejected;
  Parameter theta;
  double distance = 0.0;
};

template <class Fn>
void parallel_for(std::uint64_t begin, std::uint64_t end, int workers, Fn&& fn) {
  const std::uint64_t count = end - begin;
  if (workers <= 1 || count < 2) {
    for (std::uint64_t i = begin; i < end; ++i) fn(i);
    return;
  }
  const int n_threads = static_cast<int>(
      std::min<std::uint64_t>(static_cast<std::uint64_t>(workers), count));
  std::atomic<std::uint64_t> next{begin};
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n_threads));
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(n_threads - 1));
  const std::uint64_t chunk = std::max<std::uint64_t>(1, count / (4 * static_cast<std::uint64_t>(n_threads)));
  const auto work = [&](int slot) {
    try {
      for (;;) {
        const std::uint64_t lo = next.fetch_add(chunk);
        if (lo >= end) break;
        const std::uint64_t hi = std::min(end, lo + chunk);
        for (std::uint64_t i = lo; i < hi; ++i) fn(i);
      }
    } catch (...) {
      errors[static_cast<std::size_t>(slot)] = std::current_exception();
    }
  };
  for (int s = 1; s < n_threads; ++s) pool.emplace_back(work, s);
  work(0);
  for (auto& th : pool) th.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

struct HarvestResult {
  std::vector<Parameter> thetas;
  std::vector<double> distances;
  std::uint64_t attempts = 0;   ///< attempts up to and including the final acceptance
  std::uint64_t simulated = 0;  ///< attempts that reached the forward model
  std::uint64_t out_of_support = 0;
  /// Set when a simulation allowance ran out before n_target acceptances.
  bool exhausted = false;
};

/// Runs numbered attempts until `n_target` acceptances, committing results in
/// attempt order. Batches are sized from committed statistics only, so the
/// outcome does not depend on the worker count. A nonzero `max_simulated`
/// bounds the simulated draws; hitting it marks the result exhausted instead
/// of throwing.
template <class AttemptFn>
HarvestResult harvest(std::size_t n_target, std::uint64_t attempt_budget, int workers,
                      int iteration, double epsilon, AttemptFn&& attempt,
                      std::uint64_t max_simulated = 0) {
  HarvestResult out;
  out.thetas.reserve(n_target);
  out.distances.reserve(n_target);

  std::uint64_t next_index = 0;
  std::uint64_t batch = std::max<std::uint64_t>(1024, n_target);
  std::vector<AttemptResult> results;

  while (out.thetas.size() < n_target) {
    if (next_index >= attempt_budget) {
      throw AcceptanceStarvation(iteration, epsilon, next_index, out.thetas.size(), n_target);
    }
    batch = std::min(batch, attempt_budget - next_index);
    results.assign(batch, AttemptResult{});
    parallel_for(next_index, next_index + batch, workers,
                 [&](std::uint64_t i) { results[i - next_index] = attempt(i); });

    for (std::uint64_t j = 0; j < batch && out.thetas.size() < n_target; ++j) {
      auto& r = results[j];
      if (r.outcome == Outcome::out_of_support) {
        out.attempts += 1;
        out.out_of_support += 1;
        continue;
      }
      if (max_simulated != 0 && out.simulated >= max_simulated) {
        out.exhausted = true;
        return out;
      }
      out.attempts += 1;
      out.simulated += 1;
      if (r.outcome == Outcome::accepted) {
        out.thetas.push_back(std::move(r.theta));
        out.distances.push_back(r.distance);
      }
    }
    next_index += batch;

    if (out.thetas.size() < n_target) {
      const double rate =
          std::max(1e-4, static_cast<double>(out.thetas.size()) / static_cast<double>(out.attempts));
      const auto wanted = static_cast<std::uint64_t>(
          1.25 * static_cast<double>(n_target - out.thetas.size()) / rate) + 1;
      batch = std::clamp<std::uint64_t>(wanted, 1024, 65536);
    }
  }
  return out;
}

/// Simulates a proposal, retrying when the distance comes back NaN (a failed
/// simulation); an infinite distance is a valid rejection.
inline double simulate_distance_with_retry(const ModelSpec& model, const Parameter& theta,
                                           RngStream& rng, int max_retries) {
  for (int r = 0; r <= max_retries; ++r) {
    const Observation y = model.simulate(theta, rng);
    const double d = model.distance(model.observed, y);
    if (!std::isnan(d)) return d;
  }
  throw std::runtime_error("simulator failure: non-finite output persisted through " +
                           std::to_string(max_retries) + " retries");
}

inline PerturbationKernel make_kernel(const ModelSpec& model, const ParticleSystem& prev) {
  if (model.uniform_kernel_half_width) {
    return UniformKernel{*model.uniform_kernel_half_width};
  }
  auto tau2 = perturbation_variance(prev);
  if (has_degenerate_dimension(tau2)) {
    throw std::runtime_error("degenerate particle system: zero kernel variance");
  }
  return GaussianKernel{std::move(tau2)};
}

inline std::vector<double> kernel_variance_of(const PerturbationKernel& kernel, std::size_t dim) {
  if (const auto* g = std::get_if<GaussianKernel>(&kernel)) return g->tau2;
  const double h = std::get<UniformKernel>(kernel).half_width;
  return std::vector<double>(dim, h * h / 3.0);
}

}  // namespace detail

struct InitResult {
  ParticleSystem system;
  IterationRecord record;
  /// All k*N prior draws, kept as the reference sample for the first
  /// adaptive ratio fit.
  std::vector<Parameter> prior_draws;
};

/// First generation by prior oversampling: draw k*N parameters, simulate each,
/// keep the N with the smallest distances; the first tolerance is the largest
/// retained distance.
inline InitResult initialize(const ModelSpec& model, const RunConfig& config) {
  if (config.n_particles < 2) throw std::invalid_argument("initialize: need at least 2 particles");
  if (config.oversample < 1) throw std::invalid_argument("initialize: oversample must be >= 1");
  const auto start = std::chrono::steady_clock::now();
  const std::size_t n = static_cast<std::size_t>(config.n_particles);
  const std::uint64_t total = static_cast<std::uint64_t>(config.n_particles) *
                              static_cast<std::uint64_t>(config.oversample);

  std::vector<Parameter> thetas(total);
  std::vector<double> distances(total);
  detail::parallel_for(0, total, config.worker_count, [&](std::uint64_t i) {
    RngStream rng(config.seed, stream_domain(StreamPurpose::prior_init, 1), i);
    thetas[i] = model.prior.sample(rng);
    distances[i] = detail::simulate_distance_with_retry(model, thetas[i], rng,
                                                        config.max_sim_retries);
  });

  std::vector<std::uint64_t> order(total);
  std::iota(order.begin(), order.end(), std::uint64_t{0});
  std::sort(order.begin(), order.end(), [&](std::uint64_t a, std::uint64_t b) {
    return distances[a] != distances[b] ? distances[a] < distances[b] : a < b;
  });

  ParticleSystem system;
  system.iteration = 1;
  system.particles.resize(n);
  const double w = 1.0 / static_cast<double>(n);
  for (std::size_t j = 0; j < n; ++j) {
    system.particles[j] = {thetas[order[j]], w, distances[order[j]]};
  }
  system.tolerance = system.particles.back().distance;
  if (!std::isfinite(system.tolerance)) {
    throw std::runtime_error("initialize: fewer finite-distance draws than particles");
  }
  system.kernel_variance.assign(system.dim(), 0.0);

  IterationRecord record;
  record.iteration = 1;
  record.epsilon = system.tolerance;
  record.draws = total;
  record.acceptance_rate = static_cast<double>(n) / static_cast<double>(total);
  record.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  return {std::move(system), std::move(record), std::move(thetas)};
}

namespace detail {

struct IterateOutcome {
  bool completed = false;
  ParticleSystem system;
  IterationRecord record;
  std::uint64_t spent_simulations = 0;  ///< simulations consumed when incomplete
};

inline IterateOutcome try_iterate(const ParticleSystem& prev, double epsilon_t,
                                  const ModelSpec& model, const RunConfig& config,
                                  std::uint64_t max_simulated);

}  // namespace detail

/// One sequential iteration: propose from the previous generation until
/// n_particles acceptances at the new, strictly smaller tolerance; weight by
/// prior over kernel mixture density.
inline std::pair<ParticleSystem, IterationRecord> iterate(const ParticleSystem& prev,
                                                          double epsilon_t,
                                                          const ModelSpec& model,
                                                          const RunConfig& config) {
  auto outcome = detail::try_iterate(prev, epsilon_t, model, config, 0);
  return {std::move(outcome.system), std::move(outcome.record)};
}

namespace detail {

inline IterateOutcome try_iterate(const ParticleSystem& prev, double epsilon_t,
                                  const ModelSpec& model, const RunConfig& config,
                                  std::uint64_t max_simulated) {
  if (!(epsilon_t < prev.tolerance)) {
    throw std::invalid_argument("iterate: tolerance must strictly decrease");
  }
  const auto start = std::chrono::steady_clock::now();
  const int t = prev.iteration + 1;
  const PerturbationKernel kernel = detail::make_kernel(model, prev);
  const WeightedIndexSampler sampler(prev.weights());
  const std::size_t n = static_cast<std::size_t>(config.n_particles);

  const auto attempt = [&](std::uint64_t index) {
    detail::AttemptResult result;
    RngStream rng(config.seed, stream_domain(StreamPurpose::proposal, static_cast<std::uint64_t>(t)),
                  index);
    result.theta = resample_and_perturb(prev, kernel, sampler, rng);
    if (model.prior.density(result.theta) == 0.0) {
      result.outcome = detail::Outcome::out_of_support;
      return result;
    }
    result.distance =
        detail::simulate_distance_with_retry(model, result.theta, rng, config.max_sim_retries);
    result.outcome =
        (result.distance <= epsilon_t) ? detail::Outcome::accepted : detail::Outcome::rejected;
    return result;
  };

  auto got = detail::harvest(n, config.attempt_budget, config.worker_count, t, epsilon_t, attempt,
                             max_simulated);
  IterateOutcome outcome;
  if (got.exhausted) {
    outcome.spent_simulations = got.simulated;
    return outcome;
  }

  ParticleSystem system;
  system.iteration = t;
  system.tolerance = epsilon_t;
  system.kernel_variance = detail::kernel_variance_of(kernel, prev.dim());
  system.particles.resize(n);

  std::vector<double> raw(n);
  std::uint64_t zero_weight = 0;
  for (std::size_t j = 0; j < n; ++j) {
    const auto iw = importance_weight(got.thetas[j], prev, kernel, model.prior);
    raw[j] = iw.value;
    if (iw.zero_denominator || iw.value == 0.0) zero_weight += 1;
  }
  const auto normalized = normalize_weights(raw);
  for (std::size_t j = 0; j < n; ++j) {
    system.particles[j] = {std::move(got.thetas[j]), normalized[j], got.distances[j]};
  }

  IterationRecord record;
  record.iteration = t;
  record.epsilon = epsilon_t;
  record.draws = got.simulated;
  record.acceptance_rate = static_cast<double>(n) / static_cast<double>(got.simulated);
  record.out_of_support = got.out_of_support;
  record.zero_weight = zero_weight;
  record.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  outcome.completed = true;
  outcome.system = std::move(system);
  outcome.record = std::move(record);
  return outcome;
}

/// First generation for a fixed tolerance sequence: plain rejection sampling
/// from the prior at the given first tolerance.
inline std::pair<ParticleSystem, IterationRecord> initialize_at_fixed_tolerance(
    const ModelSpec& model, const RunConfig& config, double epsilon_1) {
  const auto start = std::chrono::steady_clock::now();
  const std::size_t n = static_cast<std::size_t>(config.n_particles);
  const auto attempt = [&](std::uint64_t index) {
    AttemptResult result;
    RngStream rng(config.seed, stream_domain(StreamPurpose::proposal, 1), index);
    result.theta = model.prior.sample(rng);
    result.distance = simulate_distance_with_retry(model, result.theta, rng,
                                                   config.max_sim_retries);
    result.outcome = (result.distance <= epsilon_1) ? Outcome::accepted : Outcome::rejected;
    return result;
  };
  auto got = harvest(n, config.attempt_budget, config.worker_count, 1, epsilon_1, attempt);

  ParticleSystem system;
  system.iteration = 1;
  system.tolerance = epsilon_1;
  system.particles.resize(n);
  const double w = 1.0 / static_cast<double>(n);
  for (std::size_t j = 0; j < n; ++j) {
    system.particles[j] = {std::move(got.thetas[j]), w, got.distances[j]};
  }
  system.kernel_variance.assign(system.dim(), 0.0);

  IterationRecord record;
  record.iteration = 1;
  record.epsilon = epsilon_1;
  record.draws = got.simulated;
  record.acceptance_rate = static_cast<double>(n) / static_cast<double>(got.simulated);
  record.out_of_support = got.out_of_support;
  record.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {std::move(system), std::move(record)};
}

struct PolicyContext {
  const ModelSpec& model;
  const RunConfig& config;
  const std::vector<ParticleSystem>& snapshots;
  const std::vector<Parameter>& prior_draws;
  RunTrace& trace;
};

inline ScheduleDecision consult_policy(const SchedulerPolicy& policy, PolicyContext ctx,
                                       std::size_t fixed_consumed) {
  const ParticleSystem& current = ctx.snapshots.back();
  const int t = current.iteration;
  const auto distances = current.distances();

  if (const auto* adaptive = std::get_if<AdaptivePolicy>(&policy)) {
    AdaptivePolicy p = *adaptive;
    p.ratio_config.seed =
        ctx.config.seed ^ (static_cast<std::uint64_t>(t) * 0x9E3779B97F4A7C15ull);
    const auto curr_sample = current.thetas();
    const std::vector<Parameter> prev_sample =
        (t == 1) ? ctx.prior_draws : ctx.snapshots[ctx.snapshots.size() - 2].thetas();
    return adaptive_next(prev_sample, curr_sample, distances, p, t, current.tolerance);
  }
  if (const auto* seq = std::get_if<FixedSequencePolicy>(&policy)) {
    if (fixed_consumed >= seq->epsilons.size()) {
      return StopDecision{"fixed sequence exhausted"};
    }
    return ContinueDecision{seq->epsilons[fixed_consumed], std::nullopt};
  }
  if (const auto* fq = std::get_if<FixedQuantilePolicy>(&policy)) {
    const double next = distance_quantile(distances, fq->q);
    if (!(next < current.tolerance)) return StopDecision{"tolerance stalled"};
    return ContinueDecision{next, fq->q};
  }
  if (const auto* ep = std::get_if<EssPolicy>(&policy)) {
    const auto shrink = ess_next(current.weights(), distances, ep->alpha);
    if (!(shrink.epsilon < current.tolerance)) return StopDecision{"tolerance stalled"};
    return ContinueDecision{shrink.epsilon, std::nullopt};
  }

  const auto& tar = std::get<TarPolicy>(policy);
  const PerturbationKernel kernel = make_kernel(ctx.model, current);
  const WeightedIndexSampler sampler(current.weights());
  const auto simulate_distance = [&](RngStream& rng) {
    const Parameter theta = resample_and_perturb(current, kernel, sampler, rng);
    if (ctx.model.prior.density(theta) == 0.0) {
      return std::numeric_limits<double>::infinity();
    }
    return simulate_distance_with_retry(ctx.model, theta, rng, ctx.config.max_sim_retries);
  };
  std::vector<double> grid(static_cast<std::size_t>(tar.grid_size));
  for (std::size_t g = 0; g < grid.size(); ++g) {
    grid[g] = current.tolerance * static_cast<double>(g + 1) /
              static_cast<double>(tar.grid_size + 1);
  }
  const auto curve = tar_curve(grid, tar.replicates, tar.draws_per_replicate, simulate_distance,
                               ctx.config.seed, static_cast<std::uint64_t>(t));
  ctx.trace.auxiliary_draws += static_cast<std::uint64_t>(tar.replicates) *
                               static_cast<std::uint64_t>(tar.draws_per_replicate);
  ctx.trace.tar_curves.emplace_back(t, curve);
  const auto elbow = tar_elbow(curve);
  if (!elbow) return StopDecision{"no elbow in acceptance-rate curve"};
  if (!(*elbow < current.tolerance)) return StopDecision{"tolerance stalled"};
  return ContinueDecision{*elbow, std::nullopt};
}

}  // namespace detail

/// Full sequential run: initialization, scheduler-driven iterations, stopping.
/// On failure the trace collected so far rides along on the exception.
inline RunTrace run(const ModelSpec& model, const RunConfig& config) {
  RunTrace trace;
  const auto start = std::chrono::steady_clock::now();
  std::vector<Parameter> prior_draws;
  std::size_t fixed_consumed = 0;

  try {
    const auto* seq = std::get_if<FixedSequencePolicy>(&config.policy);
    if (seq != nullptr) {
      if (seq->epsilons.empty()) throw std::invalid_argument("fixed sequence: empty");
      for (std::size_t i = 1; i < seq->epsilons.size(); ++i) {
        if (!(seq->epsilons[i] < seq->epsilons[i - 1])) {
          throw std::invalid_argument("fixed sequence: must be strictly decreasing");
        }
      }
      auto [system, record] =
          detail::initialize_at_fixed_tolerance(model, config, seq->epsilons.front());
      fixed_consumed = 1;
      trace.records.push_back(std::move(record));
      trace.snapshots.push_back(std::move(system));
    } else {
      auto init = initialize(model, config);
      prior_draws = std::move(init.prior_draws);
      trace.records.push_back(std::move(init.record));
      trace.snapshots.push_back(std::move(init.system));
    }

    for (;;) {
      trace.total_draws = 0;
      for (const auto& r : trace.records) trace.total_draws += r.draws;
      const int completed = trace.iterations();

      if (completed >= config.max_iterations) {
        trace.stop_reason = "max iterations reached";
        break;
      }
      if (config.total_draw_budget && trace.total_draws >= *config.total_draw_budget) {
        trace.stop_reason = "draw budget reached";
        break;
      }

      const auto decision = detail::consult_policy(
          config.policy, {model, config, trace.snapshots, prior_draws, trace}, fixed_consumed);
      if (const auto* stop = std::get_if<StopDecision>(&decision)) {
        trace.stop_reason = stop->reason;
        break;
      }
      const auto& cont = std::get<ContinueDecision>(decision);
      if (std::holds_alternative<FixedSequencePolicy>(config.policy)) fixed_consumed += 1;

      // Under a draw budget an iteration may only simulate what remains; one
      // that cannot finish inside the allowance is discarded so the reported
      // run never exceeds the budget.
      const std::uint64_t allowance =
          config.total_draw_budget ? *config.total_draw_budget - trace.total_draws : 0;
      auto outcome = detail::try_iterate(trace.snapshots.back(), cont.next_epsilon, model, config,
                                         allowance);
      if (!outcome.completed) {
        trace.auxiliary_draws += outcome.spent_simulations;
        trace.stop_reason = "draw budget reached";
        break;
      }
      outcome.record.q_used = cont.q_used;
      trace.records.push_back(std::move(outcome.record));
      trace.snapshots.push_back(std::move(outcome.system));
    }
  } catch (const std::exception& e) {
    trace.total_draws = 0;
    for (const auto& r : trace.records) trace.total_draws += r.draws;
    trace.stop_reason = std::string("error: ") + e.what();
    trace.total_wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    throw RunError(e.what(), std::move(trace));
  }

  trace.total_draws = 0;
  for (const auto& r : trace.records) trace.total_draws += r.draws;
  trace.total_wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return trace;
}

}  // namespace abcpmc

#endif  // ABCPMC_ENGINE_HPP_
