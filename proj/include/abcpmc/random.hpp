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

#ifndef ABCPMC_RANDOM_HPP_
#define ABCPMC_RANDOM_HPP_

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

/**
 * \file
 * \brief Counter-based random number streams.
 *
 * Every random draw in the library is a pure function of (seed, domain, index,
 * position within the stream). Work can therefore be sharded across threads in
 * any order and still produce bit-identical results: a worker that processes
 * attempt 4711 always sees the same randomness, no matter which thread runs it
 * or when.
 */

namespace abcpmc {

/// Philox4x32-10 keyed counter permutation (Salmon et al., SC'11).
class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Counter generate(Counter ctr, Key key) {
    ctr = round(ctr, key);
    for (int r = 1; r < 10; ++r) {
      key[0] += 0x9E3779B9u;
      key[1] += 0xBB67AE85u;
      ctr = round(ctr, key);
    }
    return ctr;
  }

 private:
  static Counter round(const Counter& c, const Key& k) {
    const std::uint64_t p0 = std::uint64_t{0xD2511F53u} * c[0];
    const std::uint64_t p1 = std::uint64_t{0xCD9E8D57u} * c[2];
    return {static_cast<std::uint32_t>(p1 >> 32) ^ c[1] ^ k[0],
            static_cast<std::uint32_t>(p1 & 0xFFFFFFFFu),
            static_cast<std::uint32_t>(p0 >> 32) ^ c[3] ^ k[1],
            static_cast<std::uint32_t>(p0 & 0xFFFFFFFFu)};
  }
};

/// Labels for independent stream families used across the sampler.
enum class StreamPurpose : std::uint8_t {
  prior_init = 1,     ///< initial draws from the prior
  proposal = 2,       ///< per-attempt proposal/simulation randomness
  tar_probe = 3,      ///< threshold-acceptance-rate curve probes
  ratio_centers = 4,  ///< kernel-center subsampling for ratio fits
  generic = 5,        ///< tests and ad hoc uses
};

/// Packs (purpose, sub-stream, iteration) into a 64-bit stream domain.
constexpr std::uint64_t stream_domain(StreamPurpose purpose, std::uint64_t iteration = 0,
                                      std::uint64_t substream = 0) {
  return (static_cast<std::uint64_t>(purpose) << 56) | ((substream & 0xFFFFFFu) << 32) |
         (iteration & 0xFFFFFFFFu);
}

/// A deterministic random stream addressed by (seed, domain, index).
///
/// The index identifies one logical unit of work (one proposal attempt, one
/// prior draw, ...). Within the stream an internal block counter supplies as
/// many variates as the unit needs.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t domain, std::uint64_t index)
      : key_{static_cast<std::uint32_t>(seed & 0xFFFFFFFFu),
             static_cast<std::uint32_t>(seed >> 32)},
        base_{0u, static_cast<std::uint32_t>(index & 0xFFFFFFFFu),
              static_cast<std::uint32_t>(domain & 0xFFFFFFFFu),
              static_cast<std::uint32_t>(domain >> 32)} {
    if (index >> 32 != 0) {
      throw std::invalid_argument("RngStream: stream index exceeds 2^32");
    }
  }

  std::uint32_t next_u32() {
    if (pos_ == 4) {
      base_[0] += 1;
      pos_ = 0;
    }
    if (pos_ == 0) {
      block_ = Philox4x32::generate(base_, key_);
    }
    return block_[pos_++];
  }

  std::uint64_t next_u64() {
    const std::uint64_t hi = next_u32();
    return (hi << 32) | next_u32();
  }

  /// Uniform on the open interval (0, 1).
  double uniform01() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Standard normal variate (Box-Muller, second value cached).
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    const double u1 = uniform01();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * 3.14159265358979323846 * u2;
    cached_ = r * std::sin(a);
    has_cached_ = true;
    return r * std::cos(a);
  }

 private:
  Philox4x32::Key key_;
  Philox4x32::Counter base_;
  Philox4x32::Counter block_{};
  int pos_ = 0;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

/// Draws indices with probability proportional to a fixed weight vector.
///
/// The cumulative table is built once per particle generation; each draw is a
/// binary search, so the hot proposal loop stays O(log N) per attempt.
class WeightedIndexSampler {
 public:
  explicit WeightedIndexSampler(std::span<const double> weights) : cdf_(weights.size()) {
    if (weights.empty()) {
      throw std::invalid_argument("WeightedIndexSampler: empty weight vector");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (weights[i] < 0.0) {
        throw std::invalid_argument("WeightedIndexSampler: negative weight");
      }
      total += weights[i];
      cdf_[i] = total;
    }
    if (total <= 0.0) {
      throw std::invalid_argument("WeightedIndexSampler: weights sum to zero");
    }
    total_ = total;
  }

  std::size_t draw(RngStream& rng) const {
    const double u = rng.uniform01() * total_;
    std::size_t lo = 0;
    std::size_t hi = cdf_.size() - 1;
    while (lo < hi) {
      const std::size_t mid = (lo + hi) / 2;
      if (cdf_[mid] < u) {
        lo = mid + 1;
      } else {
        hi = mid;
      }
    }
    return lo;
  }

  std::size_t size() const { return cdf_.size(); }

 private:
  std::vector<double> cdf_;
  double total_ = 0.0;
};

}  // namespace abcpmc

#endif  // ABCPMC_RANDOM_HPP_
