/* Copyright 2026 The ScreamKD Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef SCREAMKD_RANDOM_HPP_
#define SCREAMKD_RANDOM_HPP_

#include <cstdint>
#include <random>
#include <string_view>

namespace screamkd {

using Rng = std::mt19937_64;

// Named sub-seed: splitmix64 over the seed mixed with an FNV-1a hash of the
// name, so "split", "init", "augment" streams are independent.
std::uint64_t subseed(std::uint64_t seed, std::string_view name);
std::uint64_t subseed(std::uint64_t seed, std::string_view name, std::uint64_t index);

// Uniform double in [0, 1) from the top 53 bits.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

// Uniform integer in [lo, hi].
inline std::int64_t uniform_int(Rng& rng, std::int64_t lo, std::int64_t hi) {
  return std::uniform_int_distribution<std::int64_t>(lo, hi)(rng);
}

}  // namespace screamkd

#endif  // SCREAMKD_RANDOM_HPP_
