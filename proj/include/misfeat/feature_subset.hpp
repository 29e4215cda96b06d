// Copyright 2026 The misfeat Authors.
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

#pragma once

#include <bit>
#include <compare>
#include <cstdint>
#include <string>
#include <vector>

#include "misfeat/error.hpp"

namespace misfeat {

// Widest selection-feature set the dense lattice tables support.
inline constexpr int kMaxFeatures = 24;

using Mask = std::uint32_t;

inline constexpr Mask full_mask(int n) {
  return n >= 32 ? ~Mask{0} : ((Mask{1} << n) - 1);
}

// A node of the feature lattice: bit j set <=> feature f_j is in the subset.
// Rendered most-significant bit first, so {f0, f2} over four features is
// "0101".
class FeatureSubset {
 public:
  constexpr FeatureSubset() = default;
  constexpr explicit FeatureSubset(Mask bits) : bits_(bits) {}

  constexpr Mask bits() const { return bits_; }
  constexpr int level() const { return std::popcount(bits_); }
  constexpr bool empty() const { return bits_ == 0; }
  constexpr bool contains(int feature) const { return (bits_ >> feature) & 1U; }
  constexpr bool intersects(Mask other) const { return (bits_ & other) != 0; }
  constexpr bool subset_of(Mask other) const { return (bits_ & ~other) == 0; }

  constexpr auto operator<=>(const FeatureSubset&) const = default;

  std::string to_string(int n) const {
    std::string s(static_cast<std::size_t>(n), '0');
    for (int j = 0; j < n; ++j) {
      if (contains(j)) s[static_cast<std::size_t>(n - 1 - j)] = '1';
    }
    return s;
  }

 private:
  Mask bits_ = 0;
};

inline FeatureSubset encode(const std::vector<int>& features, int n) {
  if (features.empty()) throw ValidationError("encode: empty feature set");
  Mask bits = 0;
  for (int f : features) {
    if (f < 0 || f >= n) {
      throw ValidationError("encode: feature index " + std::to_string(f) +
                            " out of range for n=" + std::to_string(n));
    }
    bits |= Mask{1} << f;
  }
  return FeatureSubset(bits);
}

inline std::vector<int> decode(FeatureSubset s) {
  if (s.empty()) throw ValidationError("decode: empty subset");
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(s.level()));
  for (Mask b = s.bits(); b != 0; b &= b - 1) out.push_back(std::countr_zero(b));
  return out;
}

inline FeatureSubset parse_subset(const std::string& text) {
  Mask bits = 0;
  const int n = static_cast<int>(text.size());
  for (int i = 0; i < n; ++i) {
    const char c = text[static_cast<std::size_t>(i)];
    if (c != '0' && c != '1') throw ValidationError("parse_subset: bad digit in '" + text + "'");
    if (c == '1') bits |= Mask{1} << (n - 1 - i);
  }
  return FeatureSubset(bits);
}

inline constexpr std::uint64_t binomial(int n, int k) {
  if (k < 0 || k > n) return 0;
  if (k > n - k) k = n - k;
  std::uint64_t r = 1;
  for (int i = 1; i <= k; ++i) r = r * static_cast<std::uint64_t>(n - k + i) / static_cast<std::uint64_t>(i);
  return r;
}

struct LevelBounds {
  int min = 1;
  int max = 1;

  bool contains(int level) const { return level >= min && level <= max; }
  static LevelBounds full(int n) { return {1, n}; }
};

inline void validate_bounds(const LevelBounds& b, int n) {
  if (b.min < 1 || b.max < b.min || b.max > n) {
    throw ValidationError("invalid level bounds [" + std::to_string(b.min) + ", " +
                          std::to_string(b.max) + "] for n=" + std::to_string(n));
  }
}

// Calls fn(Mask) for every non-empty subset of `universe` whose popcount is
// within bounds, in ascending numeric order.
template <class Fn>
void for_each_subset(Mask universe, const LevelBounds& bounds, Fn&& fn) {
  // Ascending enumeration of submasks: s = (s - universe) & universe.
  Mask s = 0;
  do {
    s = (s - universe) & universe;
    if (s != 0 && bounds.contains(std::popcount(s))) fn(s);
  } while (s != universe && s != 0);
}

inline std::vector<Mask> subsets_within(Mask universe, const LevelBounds& bounds) {
  std::vector<Mask> out;
  for_each_subset(universe, bounds, [&](Mask s) { out.push_back(s); });
  return out;
}

}  // namespace misfeat
