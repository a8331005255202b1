// Copyright 2026 The SCCM Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef SCCM_RANDOM_H_
#define SCCM_RANDOM_H_

#include <cstdint>
#include <initializer_list>
#include <random>

namespace sccm {

using Rng = std::mt19937_64;

inline uint64_t SplitMix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Child seed for a (parent, tag...) path. Independent streams per record let
// workers generate in any order.
inline uint64_t DeriveSeed(uint64_t parent, std::initializer_list<uint64_t> tags) {
  uint64_t s = SplitMix64(parent);
  for (uint64_t t : tags) s = SplitMix64(s ^ SplitMix64(t + 0x632be59bd9b4e019ULL));
  return s;
}

// 64-bit FNV-1a.
class Fnv1a {
 public:
  void Update(const void* data, size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
      h_ ^= p[i];
      h_ *= 0x100000001b3ULL;
    }
  }
  uint64_t digest() const { return h_; }

 private:
  uint64_t h_ = 0xcbf29ce484222325ULL;
};

}  // namespace sccm

#endif  // SCCM_RANDOM_H_
