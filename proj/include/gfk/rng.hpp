// Copyright 2026 The gfk Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef GFK_RNG_HPP
#define GFK_RNG_HPP

#include <cstdint>
#include <limits>
#include <string_view>

#include <Eigen/Dense>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_01.hpp>

/**
 * \file
 * \brief Counter-keyed random streams.
 *
 * Every random quantity in the library is drawn from a stream identified by
 * a seed and a small tuple of integer keys (step, particle index, ...). Two
 * calls with the same key produce the same numbers no matter which thread or
 * in which order they run, so parallel and serial runs agree bit for bit.
 */

namespace gfk {

namespace detail {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace detail

/// Child seed of `parent` for the integer key `tag`.
constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t tag) noexcept {
  return detail::mix64(detail::mix64(parent + detail::kGolden * (tag + 1)) ^ (tag * 0xD1B54A32D192ED03ULL));
}

/// FNV-1a, used to turn names (method labels, purposes) into stream keys.
constexpr std::uint64_t hash_tag(std::string_view text) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char ch : text) {
    h ^= static_cast<unsigned char>(ch);
    h *= 0x100000001B3ULL;
  }
  return h;
}

/// SplitMix64 generator; models UniformRandomBitGenerator.
class Stream {
 public:
  using result_type = std::uint64_t;

  explicit Stream(std::uint64_t seed) noexcept : state_{seed} {}
  Stream(std::uint64_t seed, std::uint64_t key) noexcept : state_{derive_seed(seed, key)} {}
  Stream(std::uint64_t seed, std::uint64_t key0, std::uint64_t key1) noexcept
      : state_{derive_seed(derive_seed(seed, key0), key1)} {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  constexpr result_type operator()() noexcept {
    state_ += detail::kGolden;
    return detail::mix64(state_);
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  double normal() { return normal_(*this); }

  template <typename Derived>
  void fill_normal(Eigen::DenseBase<Derived>& out) {
    for (Eigen::Index j = 0; j < out.cols(); ++j) {
      for (Eigen::Index i = 0; i < out.rows(); ++i) {
        out(i, j) = normal_(*this);
      }
    }
  }

  template <typename Derived>
  void fill_normal(Eigen::DenseBase<Derived>&& out) {
    fill_normal(out);
  }

 private:
  std::uint64_t state_;
  boost::random::normal_distribution<double> normal_{};
};

}  // namespace gfk

#endif  // GFK_RNG_HPP
