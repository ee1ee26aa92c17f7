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

// Minimal end-to-end use of the library: sample the Gaussian-mixture
// benchmark with the adaptive tolerance schedule, print the tolerance path,
// and score the final posterior against the closed form.

#include <cstdio>

#include "abcpmc/abcpmc.hpp"

int main() {
  const abcpmc::ModelSpec model = abcpmc::gaussian_mixture_model();

  abcpmc::RunConfig config;
  config.n_particles = 1000;
  config.oversample = 5;
  config.seed = 20260808;

  const abcpmc::RunTrace trace = abcpmc::run(model, config);
  std::printf("%4s %12s %10s %12s %10s\n", "t", "epsilon", "q", "draws", "accept");
  for (const auto& r : trace.records) {
    std::printf("%4d %12.5f %10s %12llu %10.4f\n", r.iteration, r.epsilon,
                r.q_used ? std::to_string(*r.q_used).substr(0, 6).c_str() : "-",
                static_cast<unsigned long long>(r.draws), r.acceptance_rate);
  }
  std::printf("%s after %llu simulator draws\n", trace.stop_reason.c_str(),
              static_cast<unsigned long long>(trace.total_draws));

  const auto hellinger = abcpmc::hellinger_to_reference(model, trace.final_system());
  std::printf("Hellinger distance to the analytic posterior: %.3f\n", hellinger.at(0));
  return 0;
}
