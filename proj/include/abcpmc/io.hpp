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

#ifndef ABCPMC_IO_HPP_
#define ABCPMC_IO_HPP_

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "abcpmc/density.hpp"
#include "abcpmc/engine.hpp"
#include "abcpmc/ratio.hpp"
#include "abcpmc/schedule.hpp"

/**
 * \file
 * \brief Text serialization: CSV files that round-trip exactly and JSON run
 * summaries.
 */

namespace abcpmc {

/// Shortest decimal form that parses back to the identical double.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

/// Per-iteration particle table: iteration, particle index, coordinates,
/// weight, distance. Values round-trip bit-exactly.
inline void write_particles_csv(const RunTrace& trace, std::ostream& os) {
  const std::size_t dim = trace.snapshots.empty() ? 0 : trace.snapshots.front().dim();
  os << "iteration,particle_index";
  for (std::size_t j = 1; j <= dim; ++j) os << ",theta_" << j;
  os << ",weight,distance\n";
  for (const auto& system : trace.snapshots) {
    for (std::size_t i = 0; i < system.particles.size(); ++i) {
      const auto& p = system.particles[i];
      os << system.iteration << ',' << i;
      for (const double x : p.theta) os << ',' << format_double(x);
      os << ',' << format_double(p.weight) << ',' << format_double(p.distance) << '\n';
    }
  }
}

/// Two-column export of a gridded density.
inline void write_density_csv(const GriddedDensity& d, std::ostream& os) {
  os << "x,density\n";
  for (std::size_t i = 0; i < d.grid.size(); ++i) {
    os << format_double(d.grid[i]) << ',' << format_double(d.values[i]) << '\n';
  }
}

inline void write_tar_curve_csv(const std::vector<TarPoint>& curve, std::ostream& os) {
  os << "tolerance,acceptance_rate\n";
  for (const auto& p : curve) {
    os << format_double(p.tolerance) << ',' << format_double(p.acceptance_rate) << '\n';
  }
}

/// Reads an observed dataset stored one coordinate per row. Lines that are
/// blank or start with '#' are skipped.
inline std::vector<double> read_observed_csv(std::istream& is) {
  std::vector<double> values;
  std::string line;
  while (std::getline(is, line)) {
    std::size_t begin = line.find_first_not_of(" \t\r");
    if (begin == std::string::npos || line[begin] == '#') continue;
    std::size_t pos = 0;
    const double v = std::stod(line.substr(begin), &pos);
    values.push_back(v);
  }
  if (values.empty()) throw std::runtime_error("observed data: no values found");
  return values;
}

inline nlohmann::json record_to_json(const IterationRecord& r) {
  nlohmann::json j{{"t", r.iteration},
                   {"epsilon", r.epsilon},
                   {"draws", r.draws},
                   {"acceptance_rate", r.acceptance_rate},
                   {"out_of_support", r.out_of_support},
                   {"zero_weight", r.zero_weight},
                   {"wall_time_s", r.wall_time_s}};
  j["q"] = r.q_used ? nlohmann::json(*r.q_used) : nlohmann::json(nullptr);
  return j;
}

/// Structured run summary: policy, seed, per-iteration accounting and the stop
/// reason. Particle snapshots are exported separately as CSV.
inline nlohmann::json trace_summary_json(const RunTrace& trace, const RunConfig& config,
                                         const std::string& model_name) {
  nlohmann::json j;
  j["model"] = model_name;
  j["policy"] = policy_name(config.policy);
  j["seed"] = config.seed;
  j["n_particles"] = config.n_particles;
  j["oversample"] = config.oversample;
  j["stop_reason"] = trace.stop_reason;
  j["total_draws"] = trace.total_draws;
  j["auxiliary_draws"] = trace.auxiliary_draws;
  j["total_wall_time_s"] = trace.total_wall_time_s;
  j["iterations"] = nlohmann::json::array();
  for (const auto& r : trace.records) j["iterations"].push_back(record_to_json(r));
  return j;
}

/// Canonical byte string of everything stochastic in a trace (wall-clock
/// fields excluded). Two runs agree in distribution history and particles
/// exactly iff their fingerprints match.
inline std::string trace_fingerprint(const RunTrace& trace) {
  std::ostringstream os;
  os << trace.stop_reason << '|' << trace.total_draws << '|';
  for (const auto& r : trace.records) {
    os << r.iteration << ',' << format_double(r.epsilon) << ','
       << (r.q_used ? format_double(*r.q_used) : "-") << ',' << r.draws << ','
       << r.out_of_support << ';';
  }
  write_particles_csv(trace, os);
  return os.str();
}

/// Debug record of a fitted ratio model.
inline nlohmann::json ratio_model_to_json(const RatioModel& model) {
  nlohmann::json j;
  j["width"] = model.width;
  j["alphas"] = model.alphas;
  j["centers"] = nlohmann::json::array();
  for (const auto& c : model.centers) j["centers"].push_back(c);
  return j;
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os << content;
}

}  // namespace abcpmc

#endif  // ABCPMC_IO_HPP_
