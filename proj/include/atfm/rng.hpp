// atfm/rng.hpp

// Copyright 2026  ATFM authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#ifndef ATFM_RNG_HPP_
#define ATFM_RNG_HPP_

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace atfm {

// splitmix64; used only to turn (seed, stream ids...) into engine seeds.
inline uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline uint64_t mix64(uint64_t a, uint64_t b) { return mix64(mix64(a) ^ b); }

// Deterministic random stream. Streams derived from the same (seed, ids...)
// are bit-identical across runs; disjoint ids give independent streams, so
// per-sample derivation makes results invariant to evaluation order.
class RngStream {
 public:
  explicit RngStream(uint64_t seed) : base_(mix64(seed)), engine_(base_) {}

  RngStream(uint64_t seed, std::initializer_list<uint64_t> ids)
      : base_(chain(mix64(seed), ids)), engine_(base_) {}

  // Child stream identified by this stream's identity plus ids.
  RngStream derive(std::initializer_list<uint64_t> ids) const {
    return RngStream(FromBase{}, chain(base_, ids));
  }

  // Seed value a stream built as RngStream(seed, ids) would start from.
  static uint64_t derive_seed(uint64_t seed, std::initializer_list<uint64_t> ids) {
    return chain(mix64(seed), ids);
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Integer in [0, n); n must be > 0 and small relative to 2^64.
  uint64_t next_index(uint64_t n) { return engine_() % n; }

  // Standard normal via Box-Muller; second value cached per stream.
  double normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * M_PI * u2;
    cached_ = radius * std::sin(angle);
    have_cached_ = true;
    return radius * std::cos(angle);
  }

 private:
  struct FromBase {};
  RngStream(FromBase, uint64_t base) : base_(base), engine_(base) {}

  static uint64_t chain(uint64_t base, std::initializer_list<uint64_t> ids) {
    for (uint64_t id : ids) base = mix64(base, id);
    return base;
  }

  uint64_t base_;
  std::mt19937_64 engine_;
  double cached_ = 0.0;
  bool have_cached_ = false;
};

}  // namespace atfm

#endif  // ATFM_RNG_HPP_
