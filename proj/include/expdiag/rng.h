// Copyright 2026 The Expdiag Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef EXPDIAG_RNG_H_
#define EXPDIAG_RNG_H_

#include <cstdint>
#include <random>
#include <string_view>

namespace expdiag {

// Mixes a 64-bit value (splitmix64 finalizer). Used to derive independent
// stream seeds from (seed, key) pairs.
uint64_t Mix64(uint64_t x);

// Stable 64-bit hash of a string (FNV-1a followed by Mix64).
uint64_t HashString(std::string_view s);

// Seed for the stream identified by `key` under a master `seed`.
uint64_t StreamSeed(uint64_t seed, uint64_t key);
uint64_t StreamSeed(uint64_t seed, uint64_t key, uint64_t subkey);

// Random engine for the stream identified by (seed, key). Streams for
// distinct keys are independent, so work keyed this way gives the same
// result regardless of how it is scheduled.
std::mt19937_64 KeyedEngine(uint64_t seed, uint64_t key);
std::mt19937_64 KeyedEngine(uint64_t seed, uint64_t key, uint64_t subkey);

// Uniform in [0, 1) from the top 53 bits of a 64-bit value.
inline double UnitInterval(uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

}  // namespace expdiag

#endif  // EXPDIAG_RNG_H_
