// Copyright 2026 The NoiseLab Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef NOISELAB_RNG_H_
#define NOISELAB_RNG_H_

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <utility>
#include <vector>

namespace noiselab {

// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes);

// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

// Counter-based random stream. The key is derived from (seed, purpose,
// index); the n-th draw is a pure function of (key, n), so two Rng objects
// built from the same triple produce identical sequences regardless of what
// any other stream has done.
class Rng {
 public:
  Rng(std::uint64_t seed, std::string_view purpose, std::uint64_t index = 0);

  // Child stream. Independent of how many values this stream has produced.
  Rng derive(std::string_view purpose, std::uint64_t index = 0) const;

  std::uint64_t next_u64();
  // Uniform in [0, 1).
  double uniform();
  // Standard normal (Box-Muller, one value per two uniforms).
  double normal();
  bool bernoulli(double p) { return uniform() < p; }
  // Uniform in [0, n). n must be > 0.
  std::size_t uniform_index(std::size_t n);

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[uniform_index(i)]);
    }
  }

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

 private:
  explicit Rng(std::uint64_t key) : key_(key) {}

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace noiselab

#endif  // NOISELAB_RNG_H_
