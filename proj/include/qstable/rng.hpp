// Copyright 2026 The qstable Authors.
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

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>

namespace qstable {

/// Philox4x32-10 counter-based block function (Salmon et al., Random123).
/// Maps a 128-bit counter and a 64-bit key to 128 pseudo-random bits.
class Philox4x32 {
 public:
  using counter_type = std::array<std::uint32_t, 4>;
  using key_type = std::array<std::uint32_t, 2>;

  static constexpr counter_type block(counter_type ctr, key_type key) noexcept {
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += kWeyl0;
        key[1] += kWeyl1;
      }
      const std::uint64_t p0 = std::uint64_t{kMul0} * ctr[0];
      const std::uint64_t p1 = std::uint64_t{kMul1} * ctr[2];
      ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0], static_cast<std::uint32_t>(p1),
             static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1], static_cast<std::uint32_t>(p0)};
    }
    return ctr;
  }

 private:
  static constexpr std::uint32_t kMul0 = 0xD2511F53u;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
};

namespace detail {

constexpr std::uint32_t lo32(std::uint64_t x) noexcept { return static_cast<std::uint32_t>(x); }
constexpr std::uint32_t hi32(std::uint64_t x) noexcept { return static_cast<std::uint32_t>(x >> 32); }
constexpr std::uint64_t join64(std::uint32_t hi, std::uint32_t lo) noexcept {
  return (std::uint64_t{hi} << 32) | lo;
}

}  // namespace detail

/// Uniform on the open interval (0, 1) from the top 53 bits of `bits`.
inline double open_unit(std::uint64_t bits) noexcept {
  return (static_cast<double>(bits >> 12) + 0.5) * 0x1.0p-52;
}

/// Reproducible stream of random bits keyed by (seed, stream_id). Streams with
/// distinct ids never share Philox counters, so they can be handed to separate
/// workers. Satisfies UniformRandomBitGenerator.
class RngStream {
 public:
  using result_type = std::uint64_t;

  RngStream(std::uint64_t seed, std::uint64_t stream_id) noexcept
      : seed_(seed), stream_id_(stream_id) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    if (have_ == 0) refill();
    --have_;
    return have_ == 1 ? detail::join64(buffer_[0], buffer_[1]) : detail::join64(buffer_[2], buffer_[3]);
  }

  double uniform01() noexcept { return open_unit((*this)()); }
  double exponential() noexcept { return -std::log(uniform01()); }

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }

 private:
  void refill() noexcept {
    buffer_ = Philox4x32::block(
        {detail::lo32(block_), detail::hi32(block_), detail::lo32(stream_id_), detail::hi32(stream_id_)},
        {detail::lo32(seed_), detail::hi32(seed_)});
    ++block_;
    have_ = 2;
  }

  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t block_ = 0;
  Philox4x32::counter_type buffer_{};
  int have_ = 0;
};

/// 128 random bits addressed directly by (seed, domain, row, column), for
/// regenerating matrix entries without storing them.
inline std::array<std::uint64_t, 2> keyed_bits(std::uint64_t seed, std::uint32_t domain, std::uint32_t row,
                                               std::uint64_t column) noexcept {
  const auto out = Philox4x32::block({detail::lo32(column), detail::hi32(column), row, domain},
                                     {detail::lo32(seed), detail::hi32(seed)});
  return {detail::join64(out[0], out[1]), detail::join64(out[2], out[3])};
}

}  // namespace qstable
