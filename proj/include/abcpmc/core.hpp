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

#ifndef ABCPMC_CORE_HPP_
#define ABCPMC_CORE_HPP_

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "abcpmc/random.hpp"

/**
 * \file
 * \brief Particle-system state shared by all samplers: priors, perturbation
 * kernels, importance weights and weighted moments.
 *
 * All operations here are pure given an explicit random stream, so they can be
 * invoked concurrently on a shared read-only particle system. New generations
 * are always built as fresh ParticleSystem values.
 */

namespace abcpmc {

/// A point in parameter space.
using Parameter = std::vector<double>;

/// Uniform prior marginal on [lo, hi).
struct UniformMarginal {
  double lo;
  double hi;
};

/// Gaussian prior marginal, parameterized by variance.
struct NormalMarginal {
  double mean;
  double variance;
};

using PriorMarginal = std::variant<UniformMarginal, NormalMarginal>;

inline constexpr double kInvSqrt2Pi = 0.39894228040143267794;

/// Standard normal density.
inline double normal_pdf(double z) { return kInvSqrt2Pi * std::exp(-0.5 * z * z); }

/// Product prior over independent per-dimension marginals.
class PriorSpec {
 public:
  PriorSpec() = default;
  explicit PriorSpec(std::vector<PriorMarginal> marginals) : marginals_(std::move(marginals)) {
    for (const auto& m : marginals_) {
      if (const auto* u = std::get_if<UniformMarginal>(&m)) {
        if (!(u->lo < u->hi)) throw std::invalid_argument("PriorSpec: uniform needs lo < hi");
      } else {
        const auto& n = std::get<NormalMarginal>(m);
        if (!(n.variance > 0.0)) throw std::invalid_argument("PriorSpec: variance must be > 0");
      }
    }
  }

  std::size_t dim() const { return marginals_.size(); }

  /// Joint density; zero anywhere outside the support.
  double density(const Parameter& theta) const {
    if (theta.size() != marginals_.size()) {
      throw std::invalid_argument("PriorSpec::density: dimension mismatch");
    }
    double d = 1.0;
    for (std::size_t j = 0; j < marginals_.size(); ++j) {
      if (const auto* u = std::get_if<UniformMarginal>(&marginals_[j])) {
        if (theta[j] < u->lo || theta[j] > u->hi) return 0.0;
        d /= (u->hi - u->lo);
      } else {
        const auto& n = std::get<NormalMarginal>(marginals_[j]);
        const double sd = std::sqrt(n.variance);
        d *= normal_pdf((theta[j] - n.mean) / sd) / sd;
      }
    }
    return d;
  }

  Parameter sample(RngStream& rng) const {
    Parameter theta(marginals_.size());
    for (std::size_t j = 0; j < marginals_.size(); ++j) {
      if (const auto* u = std::get_if<UniformMarginal>(&marginals_[j])) {
        theta[j] = rng.uniform(u->lo, u->hi);
      } else {
        const auto& n = std::get<NormalMarginal>(marginals_[j]);
        theta[j] = n.mean + std::sqrt(n.variance) * rng.normal();
      }
    }
    return theta;
  }

  const std::vector<PriorMarginal>& marginals() const { return marginals_; }

 private:
  std::vector<PriorMarginal> marginals_;
};

/// One accepted parameter value with its importance weight and distance.
struct WeightedParticle {
  Parameter theta;
  double weight = 0.0;
  double distance = 0.0;
};

/// The state of the sequential sampler after one iteration.
struct ParticleSystem {
  std::vector<WeightedParticle> particles;
  double tolerance = 0.0;  ///< every particle distance is <= tolerance
  int iteration = 0;
  /// Diagonal variance of the perturbation kernel that produced this
  /// generation. Zero-filled for the first generation (drawn from the prior).
  std::vector<double> kernel_variance;

  std::size_t size() const { return particles.size(); }
  std::size_t dim() const { return particles.empty() ? 0 : particles.front().theta.size(); }

  std::vector<double> weights() const {
    std::vector<double> w(particles.size());
    for (std::size_t i = 0; i < particles.size(); ++i) w[i] = particles[i].weight;
    return w;
  }
  std::vector<double> distances() const {
    std::vector<double> d(particles.size());
    for (std::size_t i = 0; i < particles.size(); ++i) d[i] = particles[i].distance;
    return d;
  }
  std::vector<Parameter> thetas() const {
    std::vector<Parameter> t(particles.size());
    for (std::size_t i = 0; i < particles.size(); ++i) t[i] = particles[i].theta;
    return t;
  }
};

struct Moments {
  std::vector<double> mean;
  std::vector<double> variance;  ///< weighted population variance, per dimension
};

/// Per-dimension weighted mean and weighted population variance.
///
/// Expects normalized weights. A degenerate system (all particles identical)
/// yields zero variance rather than an error.
inline Moments weighted_moments(const ParticleSystem& system) {
  if (system.particles.empty()) throw std::invalid_argument("weighted_moments: empty system");
  const std::size_t p = system.dim();
  Moments m{std::vector<double>(p, 0.0), std::vector<double>(p, 0.0)};
  for (const auto& particle : system.particles) {
    for (std::size_t j = 0; j < p; ++j) m.mean[j] += particle.weight * particle.theta[j];
  }
  for (const auto& particle : system.particles) {
    for (std::size_t j = 0; j < p; ++j) {
      const double c = particle.theta[j] - m.mean[j];
      m.variance[j] += particle.weight * c * c;
    }
  }
  return m;
}

/// Variance of the Gaussian perturbation kernel for the next generation:
/// twice the weighted sample variance, per dimension.
inline std::vector<double> perturbation_variance(const ParticleSystem& system) {
  auto var = weighted_moments(system).variance;
  for (double& v : var) v *= 2.0;
  return var;
}

/// True when some dimension has collapsed to a point; perturbing with such a
/// kernel would stall the sampler.
inline bool has_degenerate_dimension(std::span<const double> tau2) {
  for (double v : tau2) {
    if (v <= 0.0) return true;
  }
  return false;
}

/// Gaussian perturbation with per-dimension variance tau2.
struct GaussianKernel {
  std::vector<double> tau2;
};

/// Additive uniform perturbation on [-half_width, half_width] per dimension.
struct UniformKernel {
  double half_width;
};

using PerturbationKernel = std::variant<GaussianKernel, UniformKernel>;

/// Adds kernel noise to a parameter, independently per dimension.
inline Parameter perturb(const Parameter& theta, const PerturbationKernel& kernel,
                         RngStream& rng) {
  Parameter out = theta;
  if (const auto* g = std::get_if<GaussianKernel>(&kernel)) {
    if (g->tau2.size() != theta.size()) {
      throw std::invalid_argument("perturb: kernel dimension mismatch");
    }
    for (std::size_t j = 0; j < out.size(); ++j) {
      out[j] += std::sqrt(g->tau2[j]) * rng.normal();
    }
  } else {
    const double h = std::get<UniformKernel>(kernel).half_width;
    for (double& x : out) x += rng.uniform(-h, h);
  }
  return out;
}

/// Draws one particle index proportionally to weight and perturbs it.
///
/// Proposals may leave the prior support; they pick up prior density zero
/// downstream and are never accepted.
inline Parameter resample_and_perturb(const ParticleSystem& prev, const PerturbationKernel& kernel,
                                      const WeightedIndexSampler& sampler, RngStream& rng) {
  const std::size_t idx = sampler.draw(rng);
  return perturb(prev.particles[idx].theta, kernel, rng);
}

/// Convenience overload that builds the index table on the fly.
inline Parameter resample_and_perturb(const ParticleSystem& prev, const PerturbationKernel& kernel,
                                      RngStream& rng) {
  const WeightedIndexSampler sampler(prev.weights());
  return resample_and_perturb(prev, kernel, sampler, rng);
}

struct ImportanceWeight {
  double value = 0.0;
  /// Set when the kernel mixture density vanished at theta (possible only for
  /// the uniform kernel); the weight is reported as zero.
  bool zero_denominator = false;
};

/// Unnormalized importance weight of a proposal against the previous
/// generation: prior density over the kernel mixture density at theta.
inline ImportanceWeight importance_weight(const Parameter& theta, const ParticleSystem& prev,
                                          const PerturbationKernel& kernel,
                                          const PriorSpec& prior) {
  const double numerator = prior.density(theta);
  if (numerator == 0.0) return {0.0, false};

  double denominator = 0.0;
  if (const auto* g = std::get_if<GaussianKernel>(&kernel)) {
    std::vector<double> inv_tau(g->tau2.size());
    for (std::size_t j = 0; j < g->tau2.size(); ++j) {
      if (!(g->tau2[j] > 0.0)) throw std::invalid_argument("importance_weight: tau2 must be > 0");
      inv_tau[j] = 1.0 / std::sqrt(g->tau2[j]);
    }
    for (const auto& particle : prev.particles) {
      double k = particle.weight;
      for (std::size_t j = 0; j < theta.size(); ++j) {
        k *= inv_tau[j] * normal_pdf((theta[j] - particle.theta[j]) * inv_tau[j]);
      }
      denominator += k;
    }
  } else {
    const double h = std::get<UniformKernel>(kernel).half_width;
    if (!(h > 0.0)) throw std::invalid_argument("importance_weight: half_width must be > 0");
    const double unit = 1.0 / (2.0 * h);
    for (const auto& particle : prev.particles) {
      bool reachable = true;
      for (std::size_t j = 0; j < theta.size() && reachable; ++j) {
        reachable = std::abs(theta[j] - particle.theta[j]) <= h;
      }
      if (reachable) {
        double k = particle.weight;
        for (std::size_t j = 0; j < theta.size(); ++j) k *= unit;
        denominator += k;
      }
    }
    if (denominator == 0.0) return {0.0, true};
  }
  return {numerator / denominator, false};
}

/// Normalizes raw weights to sum to one. All-zero input is a degenerate
/// particle system and is rejected.
inline std::vector<double> normalize_weights(std::span<const double> raw) {
  double total = 0.0;
  for (double w : raw) {
    if (w < 0.0) throw std::invalid_argument("normalize_weights: negative weight");
    total += w;
  }
  if (total <= 0.0) throw std::runtime_error("degenerate particle system: all weights zero");
  std::vector<double> out(raw.begin(), raw.end());
  for (double& w : out) w /= total;
  return out;
}

/// Effective sample size of normalized weights: 1 / sum of squares.
inline double ess(std::span<const double> weights) {
  double sq = 0.0;
  for (double w : weights) sq += w * w;
  if (sq <= 0.0) throw std::invalid_argument("ess: weights sum of squares is zero");
  return 1.0 / sq;
}

}  // namespace abcpmc

#endif  // ABCPMC_CORE_HPP_
