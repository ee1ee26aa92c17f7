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

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "abcpmc/harness.hpp"

namespace {

using namespace abcpmc;

ExperimentConfig small_config() {
  ExperimentConfig cfg;
  cfg.run.n_particles = 250;
  cfg.run.oversample = 4;
  cfg.run.seed = 99;
  cfg.run.max_iterations = 8;
  cfg.replicates = 3;
  return cfg;
}

TEST(RunExperiment, SingleReplicateIsItsOwnMedian) {
  auto cfg = small_config();
  cfg.replicates = 1;
  const auto result = run_experiment(gaussian_mixture_model(), cfg);
  EXPECT_EQ(result.median_index, 0);
  EXPECT_EQ(result.runs.size(), 1u);
  ASSERT_EQ(result.hellinger.size(), 1u);
  EXPECT_GE(result.hellinger[0], 0.0);
  EXPECT_LE(result.hellinger[0], std::sqrt(2.0));
}

TEST(RunExperiment, EvenReplicateCountIsRejected) {
  auto cfg = small_config();
  cfg.replicates = 4;
  EXPECT_THROW(run_experiment(gaussian_mixture_model(), cfg), std::invalid_argument);
}

TEST(RunExperiment, MedianSelectionByTotalDraws) {
  const auto result = run_experiment(gaussian_mixture_model(), small_config());
  std::vector<std::uint64_t> draws;
  for (const auto& r : result.runs) draws.push_back(r.total_draws);
  std::sort(draws.begin(), draws.end());
  EXPECT_EQ(result.median_run().total_draws, draws[draws.size() / 2]);
  // Derived seeds are distinct and sequential.
  for (std::size_t i = 0; i < result.runs.size(); ++i) {
    EXPECT_EQ(result.runs[i].seed, small_config().run.seed + i);
  }
}

TEST(RunExperiment, WritesArtifacts) {
  namespace fs = std::filesystem;
  const fs::path out = fs::temp_directory_path() / "abcpmc_test_out";
  fs::remove_all(out);
  auto cfg = small_config();
  cfg.replicates = 1;
  cfg.output_dir = out.string();
  cfg.export_kde = true;
  const auto result = run_experiment(gaussian_mixture_model(), cfg);
  EXPECT_TRUE(fs::exists(out / "experiment.json"));
  EXPECT_TRUE(fs::exists(out / "run_0" / "summary.json"));
  EXPECT_TRUE(fs::exists(out / "run_0" / "particles.csv"));
  EXPECT_TRUE(fs::exists(out / "median_kde_dim1.csv"));

  // The summary parses back and carries the same totals.
  std::ifstream is(out / "run_0" / "summary.json");
  const auto j = nlohmann::json::parse(is);
  EXPECT_EQ(j.at("total_draws").get<std::uint64_t>(), result.runs[0].total_draws);
  fs::remove_all(out);
}

TEST(CompareSchedulers, IdenticalPoliciesProduceIdenticalRows) {
  auto cfg = small_config();
  const auto report = compare_schedulers(
      gaussian_mixture_model(),
      {SchedulerPolicy{FixedQuantilePolicy{0.5}}, SchedulerPolicy{FixedQuantilePolicy{0.5}}},
      cfg);
  ASSERT_EQ(report.rows.size(), 2u);
  EXPECT_EQ(report.rows[0].total_draws, report.rows[1].total_draws);
  EXPECT_EQ(report.rows[0].final_epsilon, report.rows[1].final_epsilon);
  EXPECT_EQ(report.rows[0].iterations, report.rows[1].iterations);
}

TEST(CompareSchedulers, BaselinesAreBudgetCapped) {
  auto cfg = small_config();
  const auto report = compare_schedulers(
      gaussian_mixture_model(),
      {SchedulerPolicy{AdaptivePolicy{}}, SchedulerPolicy{FixedQuantilePolicy{0.5}}}, cfg);
  ASSERT_EQ(report.rows.size(), 2u);
  ASSERT_FALSE(report.rows[0].failed);
  ASSERT_FALSE(report.rows[1].failed);
  EXPECT_LE(report.rows[1].total_draws, report.rows[0].total_draws);
}

// At a matched simulation budget the adaptive schedule reaches a smaller
// tolerance than the median-quantile baseline: its deep early cuts skip the
// many mid-range generations the fixed quantile has to pay for.
TEST(CompareSchedulers, AdaptiveBeatsFixedQuantileAtMatchedBudget) {
  const auto model = gaussian_mixture_model();
  RunConfig rc;
  rc.n_particles = 1000;
  rc.oversample = 5;
  rc.seed = 1;
  rc.max_iterations = 30;
  const auto adaptive = run(model, rc);

  RunConfig baseline = rc;
  baseline.policy = FixedQuantilePolicy{0.5};
  baseline.max_iterations = 100;
  baseline.total_draw_budget = adaptive.total_draws;
  const auto fixed = run(model, baseline);

  EXPECT_LE(fixed.total_draws, adaptive.total_draws);
  EXPECT_LT(adaptive.final_system().tolerance, fixed.final_system().tolerance);
}

// The local-mode benchmark punishes timid schedules: a 0.75-quantile baseline
// without oversampling spends the adaptive run's whole budget circling the
// local optimum at theta = 10.
TEST(CompareSchedulers, TimidQuantileStaysTrappedOnSilk) {
  const auto model = silk_model();
  int trapped = 0;
  for (std::uint64_t seed : {1, 2, 3}) {
    RunConfig adaptive_cfg;
    adaptive_cfg.n_particles = 1000;
    adaptive_cfg.oversample = 5;
    adaptive_cfg.seed = seed;
    adaptive_cfg.max_iterations = 20;
    const auto adaptive = run(model, adaptive_cfg);

    RunConfig baseline = adaptive_cfg;
    baseline.oversample = 1;
    baseline.policy = FixedQuantilePolicy{0.75};
    baseline.max_iterations = 200;
    baseline.total_draw_budget = adaptive.total_draws;
    const auto fixed = run(model, baseline);

    int near_local = 0;
    for (const auto& p : fixed.final_system().particles) {
      near_local += (std::abs(p.theta[0] - 10.0) <= 1.0) ? 1 : 0;
    }
    if (near_local * 2 > static_cast<int>(fixed.final_system().size())) trapped += 1;

    int adaptive_near_global = 0;
    for (const auto& p : adaptive.final_system().particles) {
      adaptive_near_global += (std::abs(p.theta[0] - 3.0) <= 0.1) ? 1 : 0;
    }
    EXPECT_GT(adaptive_near_global * 2, static_cast<int>(adaptive.final_system().size()))
        << "seed " << seed;
  }
  EXPECT_GE(trapped, 2) << "the baseline escaped more often than expected";
}

TEST(ExportKdeGrid, DensitiesIntegrateToOnePerIteration) {
  auto cfg = small_config();
  RunConfig rc = cfg.run;
  const auto trace = run(gaussian_mixture_model(), rc);
  const auto kde = marginal_kde(trace.final_system(), 0);
  const auto grid = comparison_grid(kde, kde, 1024);

  std::ostringstream os;
  export_kde_grid(trace, 0, grid, os);
  std::istringstream is(os.str());
  std::string header;
  std::getline(is, header);
  EXPECT_EQ(header, "iteration,x,density");

  // Re-read and integrate each iteration block with the trapezoid rule.
  std::map<int, std::vector<double>> values;
  std::string line;
  while (std::getline(is, line)) {
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 + 1);
    values[std::stoi(line.substr(0, c1))].push_back(std::stod(line.substr(c2 + 1)));
  }
  EXPECT_EQ(values.size(), static_cast<std::size_t>(trace.iterations()));
  // The first generation of a box-prior model can put mass near the support
  // edge where the KDE leaks; later generations are interior.
  const auto& final_block = values.rbegin()->second;
  double integral = 0.0;
  for (std::size_t i = 1; i < grid.size(); ++i) {
    integral += 0.5 * (final_block[i] + final_block[i - 1]) * (grid[i] - grid[i - 1]);
  }
  EXPECT_NEAR(integral, 1.0, 0.01);

  EXPECT_THROW(export_kde_grid(trace, 5, grid, os), std::invalid_argument);
}

TEST(Csv, DoublesRoundTripExactly) {
  RngStream rng(55, stream_domain(StreamPurpose::generic), 0);
  for (int trial = 0; trial < 2000; ++trial) {
    double v;
    if (trial % 4 == 0) {
      v = (rng.uniform01() - 0.5) * 1e-8;
    } else if (trial % 4 == 1) {
      v = (rng.uniform01() - 0.5) * 1e12;
    } else if (trial % 4 == 2) {
      v = rng.normal();
    } else {
      v = rng.uniform01() * 51.0;
    }
    const std::string text = format_double(v);
    EXPECT_EQ(std::stod(text), v) << text;
  }
}

TEST(Csv, GriddedDensityAndTarCurveExports) {
  GriddedDensity d;
  d.grid = {0.0, 0.5, 1.0};
  d.values = {0.25, 1.5, 0.25};
  std::ostringstream os;
  write_density_csv(d, os);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "x,density");
  std::getline(is, line);
  EXPECT_EQ(line.substr(line.find(',') + 1), format_double(0.25));

  std::ostringstream tar_os;
  write_tar_curve_csv({{0.5, 0.1}, {1.0, 0.9}}, tar_os);
  EXPECT_NE(tar_os.str().find("tolerance,acceptance_rate"), std::string::npos);
  EXPECT_NE(tar_os.str().find("0.9"), std::string::npos);
}

TEST(Csv, ObservedDataReader) {
  std::istringstream is("# comment\n1.5\n\n-2.25\n 3.0\n");
  const auto values = read_observed_csv(is);
  ASSERT_EQ(values.size(), 3u);
  EXPECT_DOUBLE_EQ(values[0], 1.5);
  EXPECT_DOUBLE_EQ(values[1], -2.25);
  EXPECT_DOUBLE_EQ(values[2], 3.0);
  std::istringstream empty("# nothing\n");
  EXPECT_THROW(read_observed_csv(empty), std::runtime_error);
}

TEST(Config, ParsesPoliciesAndOverrides) {
  const auto [model, cfg] = experiment_from_json(nlohmann::json{
      {"model", "silk"}, {"policy", "fixed-quantile"}, {"q", 0.75}, {"n", 500}, {"k", 2},
      {"seed", 7}, {"replicates", 5}, {"max_iter", 12}});
  EXPECT_EQ(model.name, "silk");
  EXPECT_EQ(cfg.run.n_particles, 500);
  EXPECT_EQ(cfg.run.oversample, 2);
  EXPECT_EQ(cfg.replicates, 5);
  EXPECT_TRUE(std::holds_alternative<FixedQuantilePolicy>(cfg.run.policy));

  EXPECT_THROW(experiment_from_json(nlohmann::json{{"policy", "bogus"}}), std::invalid_argument);
  EXPECT_THROW(experiment_from_json(nlohmann::json{{"policy", "fixed-sequence"}}),
               std::invalid_argument);
  EXPECT_THROW(experiment_from_json(nlohmann::json{{"q_stop", 1.5}}), std::invalid_argument);
  EXPECT_THROW(experiment_from_json(nlohmann::json{{"n", 1}}), std::invalid_argument);
}

TEST(Config, ObservedDataOverrideFromFile) {
  namespace fs = std::filesystem;
  const fs::path path = fs::temp_directory_path() / "abcpmc_observed.csv";
  {
    std::ofstream os(path);
    os << "# single observation\n0.25\n";
  }
  const auto [model, cfg] = experiment_from_json(
      nlohmann::json{{"model", "gmm"}, {"observed", path.string()}});
  ASSERT_EQ(model.observed.size(), 1u);
  EXPECT_DOUBLE_EQ(model.observed[0], 0.25);
  EXPECT_TRUE(model.reference.empty());  // stock reference no longer applies

  {
    std::ofstream os(path);
    os << "0.1\n0.2\n";  // wrong length for a scalar-observation model
  }
  EXPECT_THROW(
      experiment_from_json(nlohmann::json{{"model", "gmm"}, {"observed", path.string()}}),
      std::invalid_argument);
  fs::remove(path);
}

TEST(Config, FixedSequenceFromJson) {
  const auto [model, cfg] = experiment_from_json(nlohmann::json{
      {"model", "gmm"},
      {"policy", "fixed-sequence"},
      {"epsilons", {1.0, 0.5013, 0.2519}}});
  const auto* seq = std::get_if<FixedSequencePolicy>(&cfg.run.policy);
  ASSERT_NE(seq, nullptr);
  EXPECT_EQ(seq->epsilons.size(), 3u);
}

TEST(RatioModelJson, SerializesForDebugging) {
  RatioModel model;
  model.centers = {{1.0, 2.0}, {3.0, 4.0}};
  model.width = 0.7;
  model.alphas = {0.25, 0.75};
  const auto j = ratio_model_to_json(model);
  EXPECT_DOUBLE_EQ(j.at("width").get<double>(), 0.7);
  EXPECT_EQ(j.at("centers").size(), 2u);
  EXPECT_EQ(j.at("alphas").size(), 2u);
}

}  // namespace
