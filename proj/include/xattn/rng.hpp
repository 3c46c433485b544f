// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace xattn {

// Deterministic RNG with a fixed algorithm for every draw. The standard
// distributions are implementation-defined, so all sampling in the project
// goes through this type to keep seeded runs bit-reproducible.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : s_(seed ? seed : 0x9e3779b97f4a7c15ull) {}

  // splitmix64
  std::uint64_t next_u64() {
    std::uint64_t z = (s_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). n must be > 0.
  std::uint64_t uniform_int(std::uint64_t n) {
    // Rejection-free modulo bias is irrelevant at our n << 2^64 scales, but
    // keep the draw well-defined anyway.
    return next_u64() % n;
  }

  // Standard normal via Box-Muller (pairs cached).
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Fisher-Yates over indices 0..n-1.
  std::vector<std::size_t> permutation(std::size_t n) {
    std::vector<std::size_t> p(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = i;
    for (std::size_t i = n; i > 1; --i) {
      const std::size_t j = std::size_t(uniform_int(i));
      std::swap(p[i - 1], p[j]);
    }
    return p;
  }

  // Derive an independent stream, e.g. per subsystem.
  Rng fork(std::uint64_t stream) {
    Rng r(s_ ^ (0xd1342543de82ef95ull * (stream + 1)));
    r.next_u64();
    return r;
  }

 private:
  std::uint64_t s_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace xattn
