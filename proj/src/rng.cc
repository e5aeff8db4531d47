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

#include "expdiag/rng.h"

namespace expdiag {

uint64_t Mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

uint64_t HashString(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return Mix64(h);
}

uint64_t StreamSeed(uint64_t seed, uint64_t key) {
  return Mix64(Mix64(seed) ^ Mix64(key + 0x632be59bd9b4e019ULL));
}

uint64_t StreamSeed(uint64_t seed, uint64_t key, uint64_t subkey) {
  return Mix64(StreamSeed(seed, key) ^ Mix64(subkey + 0x8cb92ba72f3d8dd7ULL));
}

std::mt19937_64 KeyedEngine(uint64_t seed, uint64_t key) {
  return std::mt19937_64(StreamSeed(seed, key));
}

std::mt19937_64 KeyedEngine(uint64_t seed, uint64_t key, uint64_t subkey) {
  return std::mt19937_64(StreamSeed(seed, key, subkey));
}

}  // namespace expdiag
