// Copyright 2026 The neurofuzz Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef NEUROFUZZ_RANDOM_HPP
#define NEUROFUZZ_RANDOM_HPP

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <utility>

#include "neurofuzz/hash.hpp"

namespace neurofuzz {

// Explicitly seeded random stream. The distribution mappings are written
// out here rather than taken from <random> because the standard leaves the
// algorithms of its distributions implementation-defined, and every stage
// of the pipeline must be bit-reproducible from its seed.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() {
    ++draws_;
    return engine_();
  }

  // Uniform in [0, n). n must be non-zero.
  std::uint64_t below(std::uint64_t n) {
    // Rejection sampling on the largest multiple of n.
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  // Uniform in [0, 1) with 53 bits of resolution.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in (-bound, bound). Zero is drawn as a fallback for the
  // measure-zero endpoint case.
  double symmetric(double bound) {
    const double u = uniform01();
    const double x = (2.0 * u - 1.0) * bound;
    return x <= -bound ? 0.0 : x;
  }

  bool bernoulli(double p) { return uniform01() < p; }

  template <class T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[below(i)]);
    }
  }

  /// Number of 64-bit words drawn so far.
  std::uint64_t draws() const { return draws_; }

 private:
  std::mt19937_64 engine_;
  std::uint64_t draws_ = 0;
};

/// Derives an independent seed for (master, stage, index) by hashing, so
/// stages never share correlated streams.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view stage,
                                 std::uint64_t index = 0) {
  Sha256 h;
  h.update_u64(master);
  h.update(stage);
  h.update_u64(index);
  const auto digest = h.finish();
  std::uint64_t seed = 0;
  for (int i = 0; i < 8; ++i) seed = (seed << 8) | digest[static_cast<std::size_t>(i)];
  return seed;
}

}  // namespace neurofuzz

#endif  // NEUROFUZZ_RANDOM_HPP
