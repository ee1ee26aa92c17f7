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

#ifndef ABCPMC_HARNESS_HPP_
#define ABCPMC_HARNESS_HPP_

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <memory>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "abcpmc/density.hpp"
#include "abcpmc/engine.hpp"
#include "abcpmc/io.hpp"
#include "abcpmc/models.hpp"

/**
 * \file
 * \brief Experiment orchestration: replicated runs with median selection,
 * posterior-quality evaluation against reference marginals, budget-matched
 * scheduler comparisons, and result export.
 */

namespace abcpmc {

struct ExperimentConfig {
  RunConfig run;
  int replicates = 21;  ///< must be odd so the median run is well defined
  std::string output_dir;
  int kde_grid_points = 2048;
  bool export_particles = true;
  bool export_kde = false;
  int replicate_workers = 1;
};

struct RunSummary {
  int index = 0;
  std::uint64_t seed = 0;
  bool failed = false;
  std::string stop_reason;
  int iterations = 0;
  std::uint64_t total_draws = 0;
  double final_epsilon = 0.0;
  double wall_time_s = 0.0;
};

struct ExperimentResult {
  std::string model;
  std::string policy;
  std::vector<RunSummary> runs;          ///< one per replicate, in seed order
  int median_index = -1;                 ///< replicate whose draws are the median
  std::shared_ptr<const RunTrace> median_trace;
  std::vector<double> hellinger;         ///< final posterior vs reference, per dimension

  const RunSummary& median_run() const { return runs.at(static_cast<std::size_t>(median_index)); }
};

/// Weighted KDE of one marginal of the final particle generation.
inline Kde1D marginal_kde(const ParticleSystem& system, std::size_t dim_index) {
  if (dim_index >= system.dim()) throw std::invalid_argument("marginal_kde: bad dimension index");
  Kde1D kde;
  kde.points.resize(system.size());
  kde.weights.resize(system.size());
  for (std::size_t i = 0; i < system.size(); ++i) {
    kde.points[i] = system.particles[i].theta[dim_index];
    kde.weights[i] = system.particles[i].weight;
  }
  kde.bandwidth = silverman_bandwidth(kde.points, kde.weights);
  return kde;
}

/// Hellinger distance between the final posterior marginals and the model's
/// reference marginals on a shared grid. Empty when the model carries no
/// reference.
inline std::vector<double> hellinger_to_reference(const ModelSpec& model,
                                                  const ParticleSystem& final_system,
                                                  std::size_t grid_points = 2048) {
  std::vector<double> result;
  if (model.reference.empty()) return result;
  if (model.reference.size() != final_system.dim()) {
    throw std::invalid_argument("hellinger_to_reference: reference dimension mismatch");
  }
  const double span_lo = model.reference_span ? model.reference_span->first
                                              : std::numeric_limits<double>::infinity();
  const double span_hi = model.reference_span ? model.reference_span->second
                                              : -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < final_system.dim(); ++j) {
    const Kde1D posterior = marginal_kde(final_system, j);

    if (const auto* analytic = std::get_if<AnalyticMarginal>(&model.reference[j])) {
      // The span hint guarantees the grid covers the closed form's mass.
      const auto grid = comparison_grid(posterior, posterior, grid_points, span_lo, span_hi);
      GriddedDensity ref;
      ref.grid = grid;
      ref.values.resize(grid.size());
      for (std::size_t i = 0; i < grid.size(); ++i) ref.values[i] = analytic->pdf(grid[i]);
      result.push_back(hellinger(kde_on_grid(posterior, grid), ref));
    } else {
      // An empirical reference carries its own span; the shared grid of the
      // two samples keeps a concentrated posterior resolvable.
      const auto& sample = std::get<EmpiricalMarginal>(model.reference[j]).sample;
      Kde1D ref_kde;
      ref_kde.points = sample;
      ref_kde.weights.assign(sample.size(), 1.0 / static_cast<double>(sample.size()));
      try {
        ref_kde.bandwidth = silverman_bandwidth(ref_kde.points, ref_kde.weights);
      } catch (const std::runtime_error&) {
        // Zero-spread reference (a point mass): see it at the resolution of
        // the posterior estimate.
        ref_kde.bandwidth = posterior.bandwidth;
      }
      const auto grid = comparison_grid(posterior, ref_kde, grid_points);
      result.push_back(hellinger(kde_on_grid(posterior, grid), kde_on_grid(ref_kde, grid)));
    }
  }
  return result;
}

/// Per-iteration marginal KDE table (columns iteration, x, density).
inline void export_kde_grid(const RunTrace& trace, std::size_t dim_index,
                            const std::vector<double>& grid, std::ostream& os) {
  if (trace.snapshots.empty()) throw std::invalid_argument("export_kde_grid: empty trace");
  os << "iteration,x,density\n";
  for (const auto& system : trace.snapshots) {
    const Kde1D kde = marginal_kde(system, dim_index);
    for (const double x : grid) {
      os << system.iteration << ',' << format_double(x) << ','
         << format_double(kde_pdf(kde, x)) << '\n';
    }
  }
}

namespace detail {

inline void write_run_artifacts(const std::filesystem::path& dir, const RunTrace& trace,
                                const RunConfig& config, const std::string& model_name,
                                bool particles) {
  std::filesystem::create_directories(dir);
  std::ofstream summary(dir / "summary.json");
  summary << trace_summary_json(trace, config, model_name).dump(2) << '\n';
  if (particles) {
    std::ofstream csv(dir / "particles.csv", std::ios::binary);
    write_particles_csv(trace, csv);
  }
  for (const auto& [t, curve] : trace.tar_curves) {
    std::ofstream tar(dir / ("tar_t" + std::to_string(t) + ".csv"), std::ios::binary);
    write_tar_curve_csv(curve, tar);
  }
}

}  // namespace detail

/// Runs `replicates` independent chains with derived seeds (seed, seed+1, ...)
/// and reports the run whose total draw count is the median. Failed runs are
/// recorded and excluded from median selection; the report carries whatever
/// survived.
inline ExperimentResult run_experiment(const ModelSpec& model, const ExperimentConfig& config) {
  if (config.replicates < 1 || config.replicates % 2 == 0) {
    throw std::invalid_argument("run_experiment: replicate count must be odd");
  }
  ExperimentResult result;
  result.model = model.name;
  result.policy = policy_name(config.run.policy);
  result.runs.resize(static_cast<std::size_t>(config.replicates));
  std::vector<std::shared_ptr<RunTrace>> traces(static_cast<std::size_t>(config.replicates));

  abcpmc::detail::parallel_for(
      0, static_cast<std::uint64_t>(config.replicates), config.replicate_workers,
      [&](std::uint64_t i) {
        RunConfig rc = config.run;
        rc.seed = config.run.seed + i;
        RunSummary summary;
        summary.index = static_cast<int>(i);
        summary.seed = rc.seed;
        try {
          auto trace = std::make_shared<RunTrace>(run(model, rc));
          summary.stop_reason = trace->stop_reason;
          summary.iterations = trace->iterations();
          summary.total_draws = trace->total_draws;
          summary.final_epsilon = trace->final_system().tolerance;
          summary.wall_time_s = trace->total_wall_time_s;
          traces[i] = std::move(trace);
        } catch (const RunError& e) {
          summary.failed = true;
          summary.stop_reason = e.partial_trace().stop_reason;
          summary.total_draws = e.partial_trace().total_draws;
        } catch (const std::exception& e) {
          summary.failed = true;
          summary.stop_reason = std::string("error: ") + e.what();
        }
        result.runs[i] = std::move(summary);
      });

  std::vector<int> survivors;
  for (const auto& r : result.runs) {
    if (!r.failed) survivors.push_back(r.index);
  }
  if (survivors.empty()) throw std::runtime_error("run_experiment: every replicate failed");
  std::sort(survivors.begin(), survivors.end(), [&](int a, int b) {
    const auto& ra = result.runs[static_cast<std::size_t>(a)];
    const auto& rb = result.runs[static_cast<std::size_t>(b)];
    return ra.total_draws != rb.total_draws ? ra.total_draws < rb.total_draws : a < b;
  });
  result.median_index = survivors[survivors.size() / 2];
  result.median_trace = traces[static_cast<std::size_t>(result.median_index)];
  result.hellinger =
      hellinger_to_reference(model, result.median_trace->final_system(),
                             static_cast<std::size_t>(config.kde_grid_points));

  if (!config.output_dir.empty()) {
    const std::filesystem::path out(config.output_dir);
    std::filesystem::create_directories(out);
    for (std::size_t i = 0; i < traces.size(); ++i) {
      if (!traces[i]) continue;
      RunConfig rc = config.run;
      rc.seed = result.runs[i].seed;
      detail::write_run_artifacts(out / ("run_" + std::to_string(i)), *traces[i], rc, model.name,
                                  config.export_particles);
    }
    nlohmann::json j;
    j["model"] = result.model;
    j["policy"] = result.policy;
    j["replicates"] = config.replicates;
    j["median_run"] = result.median_index;
    j["hellinger"] = result.hellinger;
    j["runs"] = nlohmann::json::array();
    for (const auto& r : result.runs) {
      j["runs"].push_back({{"index", r.index},
                           {"seed", r.seed},
                           {"failed", r.failed},
                           {"stop_reason", r.stop_reason},
                           {"iterations", r.iterations},
                           {"total_draws", r.total_draws},
                           {"final_epsilon", r.final_epsilon},
                           {"wall_time_s", r.wall_time_s}});
    }
    std::ofstream ex(out / "experiment.json");
    ex << j.dump(2) << '\n';

    if (config.export_kde && result.median_trace) {
      for (std::size_t d = 0; d < result.median_trace->final_system().dim(); ++d) {
        const auto kde = marginal_kde(result.median_trace->final_system(), d);
        const auto grid = comparison_grid(kde, kde, static_cast<std::size_t>(config.kde_grid_points));
        std::ofstream os(out / ("median_kde_dim" + std::to_string(d + 1) + ".csv"),
                         std::ios::binary);
        export_kde_grid(*result.median_trace, d, grid, os);
      }
    }
  }
  return result;
}

struct ComparisonRow {
  std::string policy;
  int iterations = 0;
  std::uint64_t total_draws = 0;
  double final_epsilon = 0.0;
  double wall_time_s = 0.0;
  std::vector<double> hellinger;
  std::string stop_reason;
  bool failed = false;
};

struct ComparisonReport {
  std::vector<ComparisonRow> rows;
};

/// Runs each policy through the replication protocol with matched seeds.
/// Baselines are budget-capped at the adaptive policy's median total draws
/// (or at the explicit budget when one is set), so the comparison is
/// draws-for-draws.
inline ComparisonReport compare_schedulers(const ModelSpec& model,
                                           const std::vector<SchedulerPolicy>& policies,
                                           const ExperimentConfig& shared) {
  if (policies.size() < 2) throw std::invalid_argument("compare_schedulers: need >= 2 policies");
  ComparisonReport report;
  report.rows.resize(policies.size());

  std::optional<std::uint64_t> budget = shared.run.total_draw_budget;
  std::vector<ExperimentResult> results(policies.size());
  std::vector<bool> done(policies.size(), false);

  const auto run_policy = [&](std::size_t i, std::optional<std::uint64_t> cap) {
    ExperimentConfig cfg = shared;
    cfg.run.policy = policies[i];
    cfg.run.total_draw_budget = cap;
    if (!shared.output_dir.empty()) {
      cfg.output_dir =
          (std::filesystem::path(shared.output_dir) / ("policy_" + std::to_string(i))).string();
    }
    ComparisonRow row;
    row.policy = policy_name(policies[i]);
    try {
      results[i] = run_experiment(model, cfg);
      const auto& median = results[i].median_run();
      row.iterations = median.iterations;
      row.total_draws = median.total_draws;
      row.final_epsilon = median.final_epsilon;
      row.wall_time_s = median.wall_time_s;
      row.hellinger = results[i].hellinger;
      row.stop_reason = median.stop_reason;
    } catch (const std::exception& e) {
      row.failed = true;
      row.stop_reason = std::string("error: ") + e.what();
    }
    report.rows[i] = std::move(row);
    done[i] = true;
  };

  // Adaptive policies run first and fix the draw budget for the baselines.
  if (!budget) {
    for (std::size_t i = 0; i < policies.size(); ++i) {
      if (std::holds_alternative<AdaptivePolicy>(policies[i])) {
        run_policy(i, std::nullopt);
        if (!report.rows[i].failed && !budget) budget = report.rows[i].total_draws;
      }
    }
  }
  for (std::size_t i = 0; i < policies.size(); ++i) {
    if (!done[i]) {
      const bool adaptive = std::holds_alternative<AdaptivePolicy>(policies[i]);
      run_policy(i, adaptive ? shared.run.total_draw_budget : budget);
    }
  }

  if (!shared.output_dir.empty()) {
    std::filesystem::create_directories(shared.output_dir);
    std::ofstream os(std::filesystem::path(shared.output_dir) / "comparison.csv",
                     std::ios::binary);
    os << "policy,iterations,total_draws,final_epsilon,wall_time_s,stop_reason";
    std::size_t hdims = 0;
    for (const auto& r : report.rows) hdims = std::max(hdims, r.hellinger.size());
    for (std::size_t d = 1; d <= hdims; ++d) os << ",hellinger_" << d;
    os << '\n';
    for (const auto& r : report.rows) {
      os << r.policy << ',' << r.iterations << ',' << r.total_draws << ','
         << format_double(r.final_epsilon) << ',' << format_double(r.wall_time_s) << ','
         << '"' << r.stop_reason << '"';
      for (std::size_t d = 0; d < hdims; ++d) {
        os << ',' << (d < r.hellinger.size() ? format_double(r.hellinger[d]) : "");
      }
      os << '\n';
    }
  }
  return report;
}

/// Parses a scheduler policy from a flat JSON configuration object.
inline SchedulerPolicy policy_from_json(const nlohmann::json& j) {
  const std::string name = j.value("policy", "adaptive");
  if (name == "adaptive") {
    AdaptivePolicy p;
    p.q_stop = j.value("q_stop", p.q_stop);
    p.min_stop_iteration = j.value("min_stop_iteration", p.min_stop_iteration);
    if (!(p.q_stop > 0.0 && p.q_stop < 1.0)) {
      throw std::invalid_argument("config: q_stop must be in (0,1)");
    }
    return p;
  }
  if (name == "fixed-sequence") {
    FixedSequencePolicy p;
    if (!j.contains("epsilons")) {
      throw std::invalid_argument("config: fixed-sequence needs an epsilons array");
    }
    p.epsilons = j.at("epsilons").get<std::vector<double>>();
    return p;
  }
  if (name == "fixed-quantile") {
    FixedQuantilePolicy p{j.value("q", 0.5)};
    if (!(p.q > 0.0 && p.q < 1.0)) throw std::invalid_argument("config: q must be in (0,1)");
    return p;
  }
  if (name == "ess") {
    EssPolicy p{j.value("alpha", 0.5)};
    if (!(p.alpha > 0.0 && p.alpha < 1.0)) {
      throw std::invalid_argument("config: alpha must be in (0,1)");
    }
    return p;
  }
  if (name == "tar") {
    TarPolicy p;
    p.grid_size = j.value("tar_grid", p.grid_size);
    p.replicates = j.value("tar_replicates", p.replicates);
    p.draws_per_replicate = j.value("tar_draws", p.draws_per_replicate);
    return p;
  }
  throw std::invalid_argument("config: unknown policy '" + name + "'");
}

/// Builds model + experiment configuration from a flat JSON object (the
/// configuration file format; CLI flags are merged in by the caller).
inline std::pair<ModelSpec, ExperimentConfig> experiment_from_json(const nlohmann::json& j) {
  ModelSpec model = make_model(j.value("model", "gmm"));
  if (j.contains("observed")) {
    std::ifstream is(j.at("observed").get<std::string>());
    if (!is) throw std::invalid_argument("config: cannot open observed data file");
    auto values = read_observed_csv(is);
    if (!model.observed.empty() && values.size() != model.observed.size()) {
      throw std::invalid_argument("config: observed data has wrong length");
    }
    model.observed = std::move(values);
    model.reference.clear();  // the stock reference no longer applies
  }

  ExperimentConfig cfg;
  cfg.run.policy = policy_from_json(j);
  cfg.run.n_particles = j.value("n", cfg.run.n_particles);
  cfg.run.oversample = j.value("k", cfg.run.oversample);
  cfg.run.seed = j.value("seed", cfg.run.seed);
  cfg.run.max_iterations = j.value("max_iter", cfg.run.max_iterations);
  cfg.run.worker_count = j.value("workers", cfg.run.worker_count);
  cfg.run.attempt_budget = j.value("attempt_budget", cfg.run.attempt_budget);
  if (j.contains("budget") && !j.at("budget").is_null()) {
    cfg.run.total_draw_budget = j.at("budget").get<std::uint64_t>();
  }
  cfg.replicates = j.value("replicates", cfg.replicates);
  cfg.output_dir = j.value("out", cfg.output_dir);
  cfg.kde_grid_points = j.value("grid_points", cfg.kde_grid_points);
  cfg.export_particles = j.value("export_particles", cfg.export_particles);
  cfg.export_kde = j.value("export_kde", cfg.export_kde);
  cfg.replicate_workers = j.value("replicate_workers", cfg.replicate_workers);

  if (cfg.run.n_particles < 2) throw std::invalid_argument("config: n must be >= 2");
  if (cfg.run.oversample < 1) throw std::invalid_argument("config: k must be >= 1");
  if (cfg.run.max_iterations < 1) throw std::invalid_argument("config: max_iter must be >= 1");
  return {std::move(model), std::move(cfg)};
}

}  // namespace abcpmc

#endif  // ABCPMC_HARNESS_HPP_
