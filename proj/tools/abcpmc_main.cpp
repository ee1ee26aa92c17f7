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

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "abcpmc/abcpmc.hpp"

namespace {

struct CliOptions {
  std::string config_path;
  std::string model;
  std::string policy;
  std::string observed;
  std::string out;
  std::string policies;  // comma-separated list for compare
  std::optional<int> n, k, max_iter, replicates, workers, tar_grid, tar_replicates;
  std::optional<std::uint64_t> seed, budget;
  std::optional<double> q, alpha, q_stop;
  std::optional<std::vector<double>> epsilons;
  bool export_kde = false;
};

void add_common_flags(CLI::App* cmd, CliOptions& opt) {
  cmd->add_option("--config", opt.config_path, "JSON configuration file (flags override it)");
  cmd->add_option("--model", opt.model, "benchmark model: gmm | silk | lotka-volterra | daycare");
  cmd->add_option("--policy", opt.policy,
                  "tolerance schedule: adaptive | fixed-sequence | fixed-quantile | ess | tar");
  cmd->add_option("--n", opt.n, "number of particles");
  cmd->add_option("--k", opt.k, "prior oversampling factor for the first generation");
  cmd->add_option("--seed", opt.seed, "base random seed");
  cmd->add_option("--max-iter", opt.max_iter, "iteration safety cap");
  cmd->add_option("--budget", opt.budget, "total simulated-draw budget");
  cmd->add_option("--out", opt.out, "output directory");
  cmd->add_option("--observed", opt.observed, "observed data CSV (one coordinate per row)");
  cmd->add_option("--workers", opt.workers, "proposal worker count");
  cmd->add_option("--q", opt.q, "quantile for the fixed-quantile policy");
  cmd->add_option("--alpha", opt.alpha, "effective-sample-size shrink factor");
  cmd->add_option("--q-stop", opt.q_stop, "adaptive stopping threshold");
  cmd->add_option("--epsilons", opt.epsilons, "fixed tolerance sequence")->delimiter(',');
  cmd->add_option("--tar-grid", opt.tar_grid, "acceptance-curve grid size");
  cmd->add_option("--tar-replicates", opt.tar_replicates, "acceptance-curve replicates");
  cmd->add_flag("--export-kde", opt.export_kde, "write per-iteration marginal KDE grids");
}

nlohmann::json merged_config(const CliOptions& opt) {
  nlohmann::json j;
  if (!opt.config_path.empty()) {
    std::ifstream is(opt.config_path);
    if (!is) throw std::invalid_argument("cannot open config file: " + opt.config_path);
    is >> j;
    if (!j.is_object()) throw std::invalid_argument("config file must hold a JSON object");
  }
  if (!opt.model.empty()) j["model"] = opt.model;
  if (!opt.policy.empty()) j["policy"] = opt.policy;
  if (!opt.observed.empty()) j["observed"] = opt.observed;
  if (!opt.out.empty()) j["out"] = opt.out;
  if (opt.n) j["n"] = *opt.n;
  if (opt.k) j["k"] = *opt.k;
  if (opt.seed) j["seed"] = *opt.seed;
  if (opt.max_iter) j["max_iter"] = *opt.max_iter;
  if (opt.budget) j["budget"] = *opt.budget;
  if (opt.replicates) j["replicates"] = *opt.replicates;
  if (opt.workers) j["workers"] = *opt.workers;
  if (opt.q) j["q"] = *opt.q;
  if (opt.alpha) j["alpha"] = *opt.alpha;
  if (opt.q_stop) j["q_stop"] = *opt.q_stop;
  if (opt.epsilons) j["epsilons"] = *opt.epsilons;
  if (opt.tar_grid) j["tar_grid"] = *opt.tar_grid;
  if (opt.tar_replicates) j["tar_replicates"] = *opt.tar_replicates;
  if (opt.export_kde) j["export_kde"] = true;
  return j;
}

void print_trace(const abcpmc::RunTrace& trace) {
  std::printf("%4s %14s %10s %12s %10s %10s\n", "t", "epsilon", "q", "draws", "accept",
              "time_s");
  for (const auto& r : trace.records) {
    std::printf("%4d %14.6g %10s %12llu %10.4f %10.2f\n", r.iteration, r.epsilon,
                r.q_used ? abcpmc::format_double(*r.q_used).substr(0, 6).c_str() : "-",
                static_cast<unsigned long long>(r.draws), r.acceptance_rate, r.wall_time_s);
  }
  std::printf("stop: %s\ntotal draws: %llu  wall time: %.2fs\n", trace.stop_reason.c_str(),
              static_cast<unsigned long long>(trace.total_draws), trace.total_wall_time_s);
}

int do_run(const CliOptions& opt) {
  auto [model, cfg] = abcpmc::experiment_from_json(merged_config(opt));
  const auto trace = abcpmc::run(model, cfg.run);
  print_trace(trace);
  const auto hellinger = abcpmc::hellinger_to_reference(model, trace.final_system(),
                                                        static_cast<std::size_t>(cfg.kde_grid_points));
  for (std::size_t d = 0; d < hellinger.size(); ++d) {
    std::printf("hellinger[dim %zu] vs reference: %.4f\n", d + 1, hellinger[d]);
  }
  if (!cfg.output_dir.empty()) {
    std::filesystem::path out(cfg.output_dir);
    std::filesystem::create_directories(out);
    std::ofstream summary(out / "summary.json");
    summary << abcpmc::trace_summary_json(trace, cfg.run, model.name).dump(2) << '\n';
    std::ofstream csv(out / "particles.csv", std::ios::binary);
    abcpmc::write_particles_csv(trace, csv);
    for (const auto& [t, curve] : trace.tar_curves) {
      std::ofstream tar(out / ("tar_t" + std::to_string(t) + ".csv"), std::ios::binary);
      abcpmc::write_tar_curve_csv(curve, tar);
    }
    if (cfg.export_kde) {
      for (std::size_t d = 0; d < trace.final_system().dim(); ++d) {
        const auto kde = abcpmc::marginal_kde(trace.final_system(), d);
        const auto grid =
            abcpmc::comparison_grid(kde, kde, static_cast<std::size_t>(cfg.kde_grid_points));
        std::ofstream os(out / ("kde_dim" + std::to_string(d + 1) + ".csv"), std::ios::binary);
        abcpmc::export_kde_grid(trace, d, grid, os);
      }
    }
    std::printf("artifacts written to %s\n", cfg.output_dir.c_str());
  }
  return 0;
}

int do_replicate(const CliOptions& opt) {
  auto [model, cfg] = abcpmc::experiment_from_json(merged_config(opt));
  const auto result = abcpmc::run_experiment(model, cfg);
  std::printf("%6s %12s %6s %12s %14s %10s  %s\n", "run", "seed", "T", "draws", "final_eps",
              "time_s", "stop");
  for (const auto& r : result.runs) {
    std::printf("%6d %12llu %6d %12llu %14.6g %10.2f  %s%s\n", r.index,
                static_cast<unsigned long long>(r.seed), r.iterations,
                static_cast<unsigned long long>(r.total_draws), r.final_epsilon, r.wall_time_s,
                r.failed ? "FAILED: " : "", r.stop_reason.c_str());
  }
  std::printf("median run: %d (by total draws)\n", result.median_index);
  for (std::size_t d = 0; d < result.hellinger.size(); ++d) {
    std::printf("hellinger[dim %zu] vs reference: %.4f\n", d + 1, result.hellinger[d]);
  }
  return 0;
}

int do_compare(const CliOptions& opt) {
  auto base = merged_config(opt);
  if (opt.policies.empty()) {
    throw std::invalid_argument("compare: --policies is required (comma-separated list)");
  }
  std::vector<abcpmc::SchedulerPolicy> policies;
  std::stringstream ss(opt.policies);
  std::string name;
  while (std::getline(ss, name, ',')) {
    nlohmann::json pj = base;
    pj["policy"] = name;
    policies.push_back(abcpmc::policy_from_json(pj));
  }
  auto [model, cfg] = abcpmc::experiment_from_json(base);
  const auto report = abcpmc::compare_schedulers(model, policies, cfg);
  std::printf("%-28s %6s %12s %14s %10s  %s\n", "policy", "T", "draws", "final_eps", "time_s",
              "hellinger");
  for (const auto& row : report.rows) {
    std::string h;
    for (double v : row.hellinger) h += abcpmc::format_double(v).substr(0, 6) + " ";
    std::printf("%-28s %6d %12llu %14.6g %10.2f  %s%s\n", row.policy.c_str(), row.iterations,
                static_cast<unsigned long long>(row.total_draws), row.final_epsilon,
                row.wall_time_s, h.c_str(), row.failed ? ("FAILED: " + row.stop_reason).c_str() : "");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Likelihood-free inference with sequential tolerance schedules"};
  app.require_subcommand(1);

  CliOptions opt;
  auto* run_cmd = app.add_subcommand("run", "execute a single sampling run");
  add_common_flags(run_cmd, opt);
  auto* replicate_cmd =
      app.add_subcommand("replicate", "replicated runs with median-run selection");
  add_common_flags(replicate_cmd, opt);
  replicate_cmd->add_option("--replicates", opt.replicates, "replicate count (odd)");
  auto* compare_cmd = app.add_subcommand("compare", "budget-matched schedule comparison");
  add_common_flags(compare_cmd, opt);
  compare_cmd->add_option("--replicates", opt.replicates, "replicate count (odd)");
  compare_cmd->add_option("--policies", opt.policies, "comma-separated policy list");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (run_cmd->parsed()) return do_run(opt);
    if (replicate_cmd->parsed()) return do_replicate(opt);
    return do_compare(opt);
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "runtime failure: %s\n", e.what());
    return 2;
  }
}
