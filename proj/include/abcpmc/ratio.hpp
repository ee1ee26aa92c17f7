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

#ifndef ABCPMC_RATIO_HPP_
#define ABCPMC_RATIO_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "abcpmc/core.hpp"
#include "abcpmc/random.hpp"

/**
 * \file
 * \brief Direct density-ratio estimation between two samples and the supremum
 * of the estimated ratio.
 *
 * The ratio r(theta) = p_num(theta) / p_den(theta) is modeled as a
 * non-negative combination of Gaussian bumps centered on numerator points and
 * fitted by maximizing the mean log ratio over the numerator sample, subject
 * to the ratio averaging one over the denominator sample. No intermediate
 * density estimate is formed, so there is no division by an estimated
 * denominator density.
 */

namespace abcpmc {

/// Fitted kernel density-ratio model.
struct RatioModel {
  std::vector<Parameter> centers;
  double width = 1.0;           ///< shared Gaussian kernel width
  std::vector<double> alphas;   ///< non-negative mixing coefficients

  double evaluate(const Parameter& theta) const {
    const double inv_two_sigma2 = 0.5 / (width * width);
    double r = 0.0;
    for (std::size_t l = 0; l < centers.size(); ++l) {
      double sq = 0.0;
      for (std::size_t j = 0; j < theta.size(); ++j) {
        const double d = theta[j] - centers[l][j];
        sq += d * d;
      }
      r += alphas[l] * std::exp(-sq * inv_two_sigma2);
    }
    return r;
  }
};

/// Hyperparameters of the ratio fit.
struct RatioFitConfig {
  int num_centers = 100;
  /// Kernel width candidates; empty means {0.25, 0.5, 1, 2, 4} times the
  /// median pairwise distance of the pooled sample.
  std::vector<double> width_candidates;
  int cv_folds = 5;
  int max_iterations = 2000;
  double tolerance = 1e-6;
  std::uint64_t seed = 0;  ///< drives the center subsample only
  /// When no width candidate beats the trivial ratio (identically one) on
  /// held-out likelihood by at least `flat_margin_se` standard errors, return
  /// that flat model instead of a noisy fit. This is what lets the supremum
  /// settle at one once the two samples become indistinguishable.
  bool allow_flat_model = true;
  double flat_margin_se = 1.0;
};

namespace detail {

/// Floor on a held-out point's log-ratio contribution during width selection
/// (log of 1e-6).
inline constexpr double kCvLogFloor = -13.815510557964274;

inline double squared_distance(const Parameter& a, const Parameter& b) {
  double sq = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double d = a[j] - b[j];
    sq += d * d;
  }
  return sq;
}

/// Median pairwise distance of the pooled sample; subsampled by stride when
/// the pool is large so the cost stays bounded.
inline double median_pairwise_distance(std::span<const Parameter> numerator,
                                       std::span<const Parameter> denominator) {
  std::vector<const Parameter*> pool;
  pool.reserve(numerator.size() + denominator.size());
  for (const auto& x : numerator) pool.push_back(&x);
  for (const auto& x : denominator) pool.push_back(&x);
  const std::size_t cap = 512;
  const std::size_t stride = std::max<std::size_t>(1, pool.size() / cap);
  std::vector<const Parameter*> sub;
  for (std::size_t i = 0; i < pool.size(); i += stride) sub.push_back(pool[i]);

  std::vector<double> dists;
  dists.reserve(sub.size() * (sub.size() - 1) / 2);
  for (std::size_t i = 0; i < sub.size(); ++i) {
    for (std::size_t k = i + 1; k < sub.size(); ++k) {
      dists.push_back(std::sqrt(squared_distance(*sub[i], *sub[k])));
    }
  }
  if (dists.empty()) return 1.0;
  std::nth_element(dists.begin(), dists.begin() + dists.size() / 2, dists.end());
  double med = dists[dists.size() / 2];
  if (!(med > 0.0)) {
    med = *std::max_element(dists.begin(), dists.end());
  }
  return med > 0.0 ? med : 1.0;
}

/// Kernel matrix rows for a set of points against the shared centers.
inline std::vector<double> kernel_matrix(std::span<const Parameter> points,
                                         std::span<const Parameter> centers, double width) {
  const double inv_two_sigma2 = 0.5 / (width * width);
  std::vector<double> k(points.size() * centers.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    double* row = &k[i * centers.size()];
    for (std::size_t l = 0; l < centers.size(); ++l) {
      row[l] = std::exp(-squared_distance(points[i], centers[l]) * inv_two_sigma2);
    }
  }
  return k;
}

struct FitResult {
  std::vector<double> alphas;
  bool converged = false;
  int iterations = 0;
};

/// Maximizes the mean log ratio over the listed numerator rows subject to
/// mean-one over the denominator (column means `m`) and non-negativity.
/// Gradient ascent with a feasibility projection each step: correct along the
/// constraint normal, clip negatives to zero, rescale onto the constraint.
inline FitResult fit_alphas(const std::vector<double>& k_num, std::size_t b,
                            std::span<const std::size_t> rows, std::span<const double> m,
                            int max_iterations, double tolerance) {
  const double m_norm2 = std::inner_product(m.begin(), m.end(), m.begin(), 0.0);
  const auto project = [&](std::vector<double>& a) {
    double dot = 0.0;
    for (std::size_t l = 0; l < b; ++l) dot += a[l] * m[l];
    const double shift = (1.0 - dot) / m_norm2;
    for (std::size_t l = 0; l < b; ++l) a[l] = std::max(0.0, a[l] + shift * m[l]);
    dot = 0.0;
    for (std::size_t l = 0; l < b; ++l) dot += a[l] * m[l];
    if (dot <= 0.0) {
      const double msum = std::accumulate(m.begin(), m.end(), 0.0);
      for (std::size_t l = 0; l < b; ++l) a[l] = 1.0 / msum;
    } else {
      for (std::size_t l = 0; l < b; ++l) a[l] /= dot;
    }
  };

  const auto objective = [&](const std::vector<double>& a, std::vector<double>& r) {
    double j = 0.0;
    for (std::size_t idx = 0; idx < rows.size(); ++idx) {
      const double* row = &k_num[rows[idx] * b];
      double ri = 0.0;
      for (std::size_t l = 0; l < b; ++l) ri += row[l] * a[l];
      r[idx] = std::max(ri, 1e-300);
      j += std::log(r[idx]);
    }
    return j / static_cast<double>(rows.size());
  };

  std::vector<double> alpha(b, 1.0);
  project(alpha);
  std::vector<double> r(rows.size());
  double j = objective(alpha, r);

  std::vector<double> grad(b), trial(b), r_trial(rows.size());
  double step = 1.0;
  int stall = 0;
  int it = 0;
  for (; it < max_iterations; ++it) {
    std::fill(grad.begin(), grad.end(), 0.0);
    for (std::size_t idx = 0; idx < rows.size(); ++idx) {
      const double* row = &k_num[rows[idx] * b];
      const double inv_r = 1.0 / (r[idx] * static_cast<double>(rows.size()));
      for (std::size_t l = 0; l < b; ++l) grad[l] += row[l] * inv_r;
    }

    bool improved = false;
    while (step > 1e-14) {
      for (std::size_t l = 0; l < b; ++l) trial[l] = alpha[l] + step * grad[l];
      project(trial);
      const double j_trial = objective(trial, r_trial);
      if (j_trial > j) {
        const double gain = (j_trial - j) / std::max(1.0, std::abs(j_trial));
        alpha.swap(trial);
        r.swap(r_trial);
        j = j_trial;
        step *= 1.2;
        stall = (gain < tolerance) ? stall + 1 : 0;
        improved = true;
        break;
      }
      step *= 0.5;
    }
    if (!improved || stall >= 3) {
      return {std::move(alpha), true, it + 1};
    }
  }
  return {std::move(alpha), false, it};
}

}  // namespace detail

/// Fits the density ratio of `numerator` over `denominator`.
///
/// Kernel centers are subsampled from the numerator; the width is chosen by
/// likelihood cross-validation on held-out numerator folds. Throws when the
/// samples are too small, dimensions disagree, or the solver fails to reach
/// stationarity within the iteration budget.
inline RatioModel kliep_fit(std::span<const Parameter> numerator,
                            std::span<const Parameter> denominator,
                            const RatioFitConfig& config = {}) {
  if (numerator.empty() || denominator.empty()) {
    throw std::invalid_argument("kliep_fit: empty sample");
  }
  const std::size_t dim = numerator.front().size();
  for (const auto& x : numerator) {
    if (x.size() != dim) throw std::invalid_argument("kliep_fit: numerator dimension mismatch");
  }
  for (const auto& x : denominator) {
    if (x.size() != dim) throw std::invalid_argument("kliep_fit: sample dimensions disagree");
  }
  const std::size_t b = std::min<std::size_t>(config.num_centers, numerator.size());
  if (numerator.size() < std::max<std::size_t>(10, b) ||
      denominator.size() < std::max<std::size_t>(10, b)) {
    throw std::invalid_argument("kliep_fit: samples too small for the requested centers");
  }
  if (config.cv_folds < 2) throw std::invalid_argument("kliep_fit: cv_folds must be >= 2");

  // Center subsample, deterministic in config.seed.
  std::vector<std::size_t> pick(numerator.size());
  std::iota(pick.begin(), pick.end(), std::size_t{0});
  RngStream center_rng(config.seed, stream_domain(StreamPurpose::ratio_centers), 0);
  for (std::size_t i = 0; i < b; ++i) {
    const std::size_t k =
        i + static_cast<std::size_t>(center_rng.uniform01() * static_cast<double>(pick.size() - i));
    std::swap(pick[i], pick[std::min(k, pick.size() - 1)]);
  }
  std::vector<Parameter> centers(b);
  for (std::size_t i = 0; i < b; ++i) centers[i] = numerator[pick[i]];

  std::vector<double> widths = config.width_candidates;
  if (widths.empty()) {
    const double med = detail::median_pairwise_distance(numerator, denominator);
    widths = {0.25 * med, 0.5 * med, med, 2.0 * med, 4.0 * med};
  }

  const int folds = config.cv_folds;
  double best_score = -std::numeric_limits<double>::infinity();
  double best_score_se = 0.0;
  double best_width = widths.front();
  for (const double width : widths) {
    if (!(width > 0.0)) throw std::invalid_argument("kliep_fit: width candidates must be > 0");
    const auto k_num = detail::kernel_matrix(numerator, centers, width);
    const auto k_den = detail::kernel_matrix(denominator, centers, width);
    std::vector<double> m(b, 0.0);
    for (std::size_t j = 0; j < denominator.size(); ++j) {
      const double* row = &k_den[j * b];
      for (std::size_t l = 0; l < b; ++l) m[l] += row[l];
    }
    for (std::size_t l = 0; l < b; ++l) m[l] /= static_cast<double>(denominator.size());

    double sum = 0.0;
    double sum_sq = 0.0;
    for (int f = 0; f < folds; ++f) {
      std::vector<std::size_t> train, held;
      for (std::size_t i = 0; i < numerator.size(); ++i) {
        (static_cast<int>(i % folds) == f ? held : train).push_back(i);
      }
      const auto fit = detail::fit_alphas(k_num, b, train, m, config.max_iterations,
                                          config.tolerance);
      if (!fit.converged) {
        throw std::runtime_error("kliep_fit: no convergence after " +
                                 std::to_string(config.max_iterations) + " iterations (width " +
                                 std::to_string(width) + ")");
      }
      for (const std::size_t i : held) {
        const double* row = &k_num[i * b];
        double ri = 0.0;
        for (std::size_t l = 0; l < b; ++l) ri += row[l] * fit.alphas[l];
        // Held-out points outside every kernel's reach are scored at a fixed
        // floor; otherwise a handful of uncovered points would veto sharply
        // resolving widths wholesale.
        const double lg = std::max(std::log(std::max(ri, 1e-300)), detail::kCvLogFloor);
        sum += lg;
        sum_sq += lg * lg;
      }
    }
    const double n = static_cast<double>(numerator.size());
    const double score = sum / n;
    if (score > best_score) {
      best_score = score;
      best_score_se = std::sqrt(std::max(0.0, sum_sq / n - score * score) / n);
      best_width = width;
    }
  }

  // The trivial model r = 1 scores exactly zero held-out mean log ratio. When
  // nothing beats it decisively the samples carry no detectable density
  // difference and the honest estimate of the ratio is flat.
  if (config.allow_flat_model && best_score <= config.flat_margin_se * best_score_se) {
    RatioModel flat;
    Parameter centroid(dim, 0.0);
    for (const auto& x : numerator) {
      for (std::size_t j = 0; j < dim; ++j) centroid[j] += x[j];
    }
    for (std::size_t j = 0; j < dim; ++j) centroid[j] /= static_cast<double>(numerator.size());
    double scale = 1.0;
    for (const auto& x : denominator) {
      scale = std::max(scale, std::sqrt(detail::squared_distance(x, centroid)));
    }
    flat.centers = {std::move(centroid)};
    flat.width = 1e8 * scale;
    flat.alphas = {1.0};
    double mean = 0.0;
    for (const auto& x : denominator) mean += flat.evaluate(x);
    mean /= static_cast<double>(denominator.size());
    flat.alphas[0] = 1.0 / mean;
    return flat;
  }

  const auto k_num = detail::kernel_matrix(numerator, centers, best_width);
  const auto k_den = detail::kernel_matrix(denominator, centers, best_width);
  std::vector<double> m(b, 0.0);
  for (std::size_t j = 0; j < denominator.size(); ++j) {
    const double* row = &k_den[j * b];
    for (std::size_t l = 0; l < b; ++l) m[l] += row[l];
  }
  for (std::size_t l = 0; l < b; ++l) m[l] /= static_cast<double>(denominator.size());

  std::vector<std::size_t> all(numerator.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  auto fit = detail::fit_alphas(k_num, b, all, m, config.max_iterations, config.tolerance);
  if (!fit.converged) {
    throw std::runtime_error("kliep_fit: no convergence after " +
                             std::to_string(config.max_iterations) + " iterations (final fit)");
  }

  RatioModel model;
  model.centers = std::move(centers);
  model.width = best_width;
  model.alphas = std::move(fit.alphas);

  // Pin the denominator-mean constraint exactly.
  double mean = 0.0;
  for (std::size_t j = 0; j < denominator.size(); ++j) {
    const double* row = &k_den[j * b];
    double r = 0.0;
    for (std::size_t l = 0; l < b; ++l) r += row[l] * model.alphas[l];
    mean += r;
  }
  mean /= static_cast<double>(denominator.size());
  if (!(mean > 0.0)) throw std::runtime_error("kliep_fit: degenerate fit");
  for (double& a : model.alphas) a /= mean;
  return model;
}

namespace detail {

/// Scalar maximization by golden-section with parabolic refinement.
template <class F>
double brent_maximize(F&& f, double lo, double hi, int iterations = 120) {
  const double gr = 0.381966011250105;  // 2 - golden ratio
  double a = lo, c = hi;
  double x = a + gr * (c - a), w = x, v = x;
  double fx = f(x), fw = fx, fv = fx;
  for (int i = 0; i < iterations; ++i) {
    const double mid = 0.5 * (a + c);
    const double tol = 1e-11 * (std::abs(x) + 1.0);
    if (std::abs(x - mid) + 0.5 * (c - a) <= 2.0 * tol) break;
    double d = gr * ((x < mid) ? (c - x) : (a - x));
    // Parabola through (v, w, x) when it is usable.
    const double r = (x - w) * (fx - fv);
    const double q = (x - v) * (fx - fw);
    const double p = (x - v) * q - (x - w) * r;
    const double q2 = 2.0 * (q - r);
    if (q2 != 0.0) {
      const double cand = x - p / q2;
      if (cand > a + tol && cand < c - tol && std::abs(cand - x) < std::abs(d)) {
        d = cand - x;
      }
    }
    const double u = x + (std::abs(d) > tol ? d : (d > 0 ? tol : -tol));
    const double fu = f(u);
    if (fu > fx) {
      if (u < x) c = x; else a = x;
      v = w; fv = fw; w = x; fw = fx; x = u; fx = fu;
    } else {
      if (u < x) a = u; else c = u;
      if (fu > fw || w == x) { v = w; fv = fw; w = u; fw = fu; }
      else if (fu > fv || v == x || v == w) { v = u; fv = fu; }
    }
  }
  return x;
}

inline double halton(std::size_t index, std::size_t base) {
  double f = 1.0, r = 0.0;
  std::size_t i = index;
  while (i > 0) {
    f /= static_cast<double>(base);
    r += f * static_cast<double>(i % base);
    i /= base;
  }
  return r;
}

template <class F>
Parameter nelder_mead_maximize(F&& f, Parameter start,
                               std::span<const std::pair<double, double>> box,
                               int max_iterations) {
  const std::size_t n = start.size();
  const auto clamp = [&](Parameter& x) {
    for (std::size_t j = 0; j < n; ++j) x[j] = std::clamp(x[j], box[j].first, box[j].second);
  };
  std::vector<std::pair<double, Parameter>> simplex;
  simplex.reserve(n + 1);
  clamp(start);
  simplex.emplace_back(f(start), start);
  for (std::size_t j = 0; j < n; ++j) {
    Parameter v = start;
    const double h = 0.05 * (box[j].second - box[j].first);
    v[j] += (v[j] + h <= box[j].second) ? h : -h;
    clamp(v);
    simplex.emplace_back(f(v), std::move(v));
  }
  const auto by_value = [](const auto& a, const auto& b) { return a.first > b.first; };
  for (int it = 0; it < max_iterations; ++it) {
    std::sort(simplex.begin(), simplex.end(), by_value);
    if (simplex.front().first - simplex.back().first <
        1e-12 * (std::abs(simplex.front().first) + 1e-12)) {
      break;
    }
    Parameter centroid(n, 0.0);
    for (std::size_t s = 0; s < n; ++s) {
      for (std::size_t j = 0; j < n; ++j) centroid[j] += simplex[s].second[j];
    }
    for (double& c : centroid) c /= static_cast<double>(n);
    auto make = [&](double coef) {
      Parameter x(n);
      for (std::size_t j = 0; j < n; ++j) {
        x[j] = centroid[j] + coef * (simplex.back().second[j] - centroid[j]);
      }
      clamp(x);
      return x;
    };
    Parameter refl = make(-1.0);
    const double f_refl = f(refl);
    if (f_refl > simplex.front().first) {
      Parameter exp_ = make(-2.0);
      const double f_exp = f(exp_);
      simplex.back() = (f_exp > f_refl) ? std::make_pair(f_exp, std::move(exp_))
                                        : std::make_pair(f_refl, std::move(refl));
    } else if (f_refl > simplex[n - 1].first) {
      simplex.back() = {f_refl, std::move(refl)};
    } else {
      Parameter contr = make(0.5);
      const double f_contr = f(contr);
      if (f_contr > simplex.back().first) {
        simplex.back() = {f_contr, std::move(contr)};
      } else {
        for (std::size_t s = 1; s <= n; ++s) {
          for (std::size_t j = 0; j < n; ++j) {
            simplex[s].second[j] = 0.5 * (simplex[s].second[j] + simplex[0].second[j]);
          }
          simplex[s].first = f(simplex[s].second);
        }
      }
    }
  }
  std::sort(simplex.begin(), simplex.end(), by_value);
  return simplex.front().second;
}

}  // namespace detail

/// Supremum of the fitted ratio over a finite box, clamped below at one.
///
/// One-dimensional models get a scalar optimizer seeded from the best of 64
/// equispaced probes; higher dimensions get simplex searches restarted from
/// the best of 512 low-discrepancy probes. Fitted centers are always probed,
/// so the result is never below the best center evaluation.
inline double ratio_sup(const RatioModel& model,
                        std::span<const std::pair<double, double>> box) {
  if (box.empty()) throw std::invalid_argument("ratio_sup: empty box");
  for (const auto& [lo, hi] : box) {
    if (!std::isfinite(lo) || !std::isfinite(hi) || !(lo <= hi)) {
      throw std::invalid_argument("ratio_sup: box must be finite");
    }
  }
  const auto eval = [&](const Parameter& x) {
    const double r = model.evaluate(x);
    if (!std::isfinite(r)) throw std::runtime_error("ratio_sup: non-finite ratio evaluation");
    return r;
  };

  double best = 0.0;
  for (const auto& c : model.centers) {
    Parameter x = c;
    for (std::size_t j = 0; j < box.size(); ++j) x[j] = std::clamp(x[j], box[j].first, box[j].second);
    best = std::max(best, eval(x));
  }

  if (box.size() == 1) {
    const double lo = box[0].first, hi = box[0].second;
    const auto f = [&](double x) { return eval(Parameter{x}); };
    double best_x = lo;
    double best_probe = -1.0;
    for (int i = 0; i < 64; ++i) {
      const double x = lo + (hi - lo) * (static_cast<double>(i) + 0.5) / 64.0;
      const double v = f(x);
      if (v > best_probe) {
        best_probe = v;
        best_x = x;
      }
    }
    const double delta = (hi - lo) / 64.0;
    const double x_opt = detail::brent_maximize(f, std::max(lo, best_x - delta),
                                                std::min(hi, best_x + delta));
    best = std::max({best, best_probe, f(x_opt)});
  } else {
    static constexpr std::size_t primes[] = {2, 3, 5, 7, 11, 13, 17, 19};
    std::vector<std::pair<double, Parameter>> probes;
    probes.reserve(512 + model.centers.size());
    for (std::size_t i = 0; i < 512; ++i) {
      Parameter x(box.size());
      for (std::size_t j = 0; j < box.size(); ++j) {
        const double u = detail::halton(i + 20, primes[j % std::size(primes)]);
        x[j] = box[j].first + u * (box[j].second - box[j].first);
      }
      probes.emplace_back(eval(x), std::move(x));
    }
    std::sort(probes.begin(), probes.end(),
              [](const auto& a, const auto& b) { return a.first > b.first; });
    const std::size_t restarts = std::min<std::size_t>(16, probes.size());
    for (std::size_t s = 0; s < restarts; ++s) {
      const Parameter x =
          detail::nelder_mead_maximize(eval, probes[s].second, box,
                                       200 * static_cast<int>(box.size()));
      best = std::max(best, eval(x));
    }
    best = std::max(best, probes.front().first);
  }
  return std::max(1.0, best);
}

/// The acceptance quantile implied by the ratio supremum: its reciprocal.
inline double adaptive_quantile(double c_hat) {
  if (!(c_hat >= 1.0)) throw std::invalid_argument("adaptive_quantile: c_hat must be >= 1");
  return 1.0 / c_hat;
}

}  // namespace abcpmc

#endif  // ABCPMC_RATIO_HPP_
