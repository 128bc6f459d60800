// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string_view>

namespace ska {

/// Counter-based generator: the i-th draw is a pure function of (seed, i),
/// so streams are reproducible across runs, platforms and language ports.
///
/// Draw i is `mix64(seed_key + i * 0x9E3779B97F4A7C15)` where `seed_key` is
/// `mix64(seed)` and `mix64` is the SplitMix64 finalizer.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) noexcept;

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t counter() const noexcept { return counter_; }

  std::uint64_t next_u64() noexcept;
  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept;
  /// Standard normal via Box-Muller; consumes two uniforms per call.
  double normal() noexcept;
  /// Uniform integer in [0, n). `n` must be positive.
  std::uint64_t below(std::uint64_t n) noexcept;

  /// Independent child stream keyed by `stream`; does not advance this one.
  Rng split(std::uint64_t stream) const noexcept;

 private:
  std::uint64_t seed_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

std::uint64_t mix64(std::uint64_t x) noexcept;

/// FNV-1a, used to key per-name streams (e.g. gradient-check sampling).
std::uint64_t hash_name(std::string_view name) noexcept;

}  // namespace ska
