// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace seqtl {

/// SplitMix64 mixing function (Steele, Lea, Flood 2014).
std::uint64_t splitmix64_mix(std::uint64_t z) noexcept;

/// Counter-based 64-bit generator.
///
/// The i-th output of stream (seed, stream_id) is splitmix64_mix(key + (i + 1) * gamma)
/// with key = splitmix64_mix(seed ^ splitmix64_mix(stream_id + gamma)) and gamma the
/// SplitMix64 golden-ratio increment. All derived distributions are implemented here
/// rather than through <random> so that every platform produces the same bits.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream_id = 0) noexcept;

  std::uint64_t next_u64() noexcept;
  /// Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept;
  /// Standard normal via Box-Muller (the spare value is cached).
  double normal() noexcept;
  bool bernoulli(double p) noexcept;
  /// Unbiased integer in [0, bound).
  std::uint64_t below(std::uint64_t bound) noexcept;
  /// Index drawn from unnormalized non-negative weights.
  std::size_t categorical(std::span<const double> weights) noexcept;

  template <typename T>
  void shuffle(std::vector<T>& v) noexcept {
    for (std::size_t i = v.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  /// Independent child stream; equal arguments give equal streams.
  Rng derive(std::uint64_t stream_id) const noexcept;

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace seqtl
