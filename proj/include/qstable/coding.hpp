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

// Quantization of power-stable observations against fixed thresholds.
//
// Bin k (1-based) holds observations with C_{k-1} < z <= C_k, where C_0 = 0
// and C_{m+1} = +inf; ties go to the lower bin. Codes are packed
// little-endian: sample i occupies bits [i*b, (i+1)*b) of the payload, with
// bit 0 of a byte being its least significant bit.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <istream>
#include <iterator>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "qstable/alpha.hpp"
#include "qstable/error.hpp"

namespace qstable {

/// Thresholds C_1 <= ... <= C_m (m >= 1) for an (m+1)-partition quantizer.
/// Duplicates are representable; estimators reject them.
class ThresholdScheme {
 public:
  ThresholdScheme(std::vector<double> thresholds, Alpha alpha) : thresholds_(std::move(thresholds)), alpha_(alpha) {
    if (thresholds_.empty()) throw domain_error("threshold scheme needs at least one threshold");
    for (std::size_t i = 0; i < thresholds_.size(); ++i) {
      if (!(thresholds_[i] > 0.0) || !std::isfinite(thresholds_[i])) {
        throw domain_error("thresholds must be positive and finite");
      }
      if (i > 0 && thresholds_[i] < thresholds_[i - 1]) throw domain_error("thresholds must be nondecreasing");
    }
  }

  /// Thresholds C_k = lambda / eta_k for a nonincreasing list of etas.
  static ThresholdScheme from_etas(std::span<const double> etas, double lambda, Alpha alpha) {
    std::vector<double> c;
    c.reserve(etas.size());
    for (double e : etas) c.push_back(lambda / e);
    return ThresholdScheme(std::move(c), alpha);
  }

  std::size_t m() const noexcept { return thresholds_.size(); }
  std::span<const double> thresholds() const noexcept { return thresholds_; }
  double operator[](std::size_t k) const { return thresholds_.at(k); }
  Alpha alpha() const noexcept { return alpha_; }

  bool strictly_increasing() const noexcept {
    return std::adjacent_find(thresholds_.begin(), thresholds_.end(), std::greater_equal<>()) == thresholds_.end();
  }

  /// 0-based bin of a powered observation.
  std::size_t bin_of(double z) const noexcept {
    return static_cast<std::size_t>(std::lower_bound(thresholds_.begin(), thresholds_.end(), z) - thresholds_.begin());
  }

 private:
  std::vector<double> thresholds_;
  Alpha alpha_;
};

/// Occupancies n_1..n_{m+1} of the bins of a scheme.
struct BinCounts {
  std::vector<std::uint64_t> counts;

  BinCounts() = default;
  explicit BinCounts(std::vector<std::uint64_t> c) : counts(std::move(c)) {}
  static BinCounts zeros(std::size_t bins) { return BinCounts(std::vector<std::uint64_t>(bins, 0)); }

  std::uint64_t total() const noexcept { return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0}); }
  std::size_t bins() const noexcept { return counts.size(); }
  std::uint64_t operator[](std::size_t k) const { return counts.at(k); }

  bool operator==(const BinCounts&) const = default;
};

/// Bits per sample of an (m+1)-partition code: ceil(log2(m+1)).
constexpr unsigned bits_per_sample(std::size_t m) noexcept {
  return static_cast<unsigned>(std::bit_width(m));
}

/// Packed per-sample bin indices.
struct CodeStream {
  unsigned bits_per_sample = 1;
  std::vector<std::uint8_t> payload;
  std::uint64_t sample_count = 0;

  static std::size_t payload_bytes(std::uint64_t n, unsigned bits) noexcept {
    return static_cast<std::size_t>((n * bits + 7) / 8);
  }

  bool operator==(const CodeStream&) const = default;
};

namespace detail {

class BitPacker {
 public:
  BitPacker(unsigned bits, std::uint64_t n) : bits_(bits), payload_(CodeStream::payload_bytes(n, bits), 0) {}

  void push(std::uint32_t value) {
    for (unsigned b = 0; b < bits_; ++b, ++pos_) {
      if ((value >> b) & 1u) payload_[pos_ >> 3] |= static_cast<std::uint8_t>(1u << (pos_ & 7));
    }
  }

  std::vector<std::uint8_t> take() && { return std::move(payload_); }

 private:
  unsigned bits_;
  std::uint64_t pos_ = 0;
  std::vector<std::uint8_t> payload_;
};

inline std::uint32_t unpack(std::span<const std::uint8_t> payload, unsigned bits, std::uint64_t index) {
  std::uint32_t v = 0;
  std::uint64_t pos = index * bits;
  for (unsigned b = 0; b < bits; ++b, ++pos) {
    v |= static_cast<std::uint32_t>((payload[pos >> 3] >> (pos & 7)) & 1u) << b;
  }
  return v;
}

}  // namespace detail

struct EncodeResult {
  BinCounts counts;
  CodeStream code;
};

/// Counts only; no packed code. Used by simulation loops.
inline BinCounts count_powered(std::span<const double> powered, const ThresholdScheme& scheme) {
  BinCounts out = BinCounts::zeros(scheme.m() + 1);
  for (double z : powered) ++out.counts[scheme.bin_of(z)];
  return out;
}

/// Quantizes values already raised to the power alpha (needed for ZeroPlus,
/// where the power transform only exists as a limit).
inline EncodeResult power_encode(std::span<const double> powered, const ThresholdScheme& scheme) {
  const unsigned bits = bits_per_sample(scheme.m());
  detail::BitPacker packer(bits, powered.size());
  BinCounts counts = BinCounts::zeros(scheme.m() + 1);
  for (double z : powered) {
    if (!(z > 0.0)) throw domain_error("power_encode: observations must be positive");
    const std::size_t k = scheme.bin_of(z);
    ++counts.counts[k];
    packer.push(static_cast<std::uint32_t>(k));
  }
  return {std::move(counts), CodeStream{bits, std::move(packer).take(), powered.size()}};
}

/// Quantizes raw observations y_j through z_j = |y_j|^alpha.
inline EncodeResult encode(std::span<const double> samples, const ThresholdScheme& scheme) {
  if (scheme.alpha().is_zero_plus()) {
    throw domain_error("encode: ZeroPlus needs pre-powered observations (use power_encode)");
  }
  const double a = scheme.alpha().value();
  const unsigned bits = bits_per_sample(scheme.m());
  detail::BitPacker packer(bits, samples.size());
  BinCounts counts = BinCounts::zeros(scheme.m() + 1);
  for (double y : samples) {
    const std::size_t k = scheme.bin_of(std::pow(std::abs(y), a));
    ++counts.counts[k];
    packer.push(static_cast<std::uint32_t>(k));
  }
  return {std::move(counts), CodeStream{bits, std::move(packer).take(), samples.size()}};
}

/// Recounts bin occupancies from a packed code for an m-threshold scheme.
inline BinCounts decode_counts(const CodeStream& code, std::size_t m) {
  if (m == 0) throw usage_error("decode_counts: m must be at least 1");
  if (code.bits_per_sample != bits_per_sample(m)) throw format_error("decode_counts: bits per sample does not match m");
  if (code.payload.size() != CodeStream::payload_bytes(code.sample_count, code.bits_per_sample)) {
    throw format_error("decode_counts: payload length does not match sample count");
  }
  BinCounts counts = BinCounts::zeros(m + 1);
  for (std::uint64_t i = 0; i < code.sample_count; ++i) {
    const std::uint32_t k = detail::unpack(code.payload, code.bits_per_sample, i);
    if (k > m) throw format_error("decode_counts: bin index out of range");
    ++counts.counts[k];
  }
  return counts;
}

// Serialized stream: "SQSK", version u8, m u8, sample_count u64 LE, payload.
inline constexpr std::array<char, 4> kCodeStreamMagic = {'S', 'Q', 'S', 'K'};
inline constexpr std::uint8_t kCodeStreamVersion = 1;

inline std::vector<std::uint8_t> serialize(const CodeStream& code, std::size_t m) {
  if (m == 0 || m > 255) throw usage_error("serialize: m must be in [1, 255]");
  if (code.bits_per_sample != bits_per_sample(m)) throw usage_error("serialize: code does not match m");
  std::vector<std::uint8_t> out;
  out.reserve(14 + code.payload.size());
  out.insert(out.end(), kCodeStreamMagic.begin(), kCodeStreamMagic.end());
  out.push_back(kCodeStreamVersion);
  out.push_back(static_cast<std::uint8_t>(m));
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(code.sample_count >> (8 * i)));
  out.insert(out.end(), code.payload.begin(), code.payload.end());
  return out;
}

struct DecodedStream {
  std::size_t m;
  CodeStream code;
};

inline DecodedStream deserialize_code_stream(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 14) throw format_error("code stream truncated");
  if (!std::equal(kCodeStreamMagic.begin(), kCodeStreamMagic.end(), bytes.begin())) {
    throw format_error("code stream: bad magic");
  }
  if (bytes[4] != kCodeStreamVersion) throw format_error("code stream: unsupported version");
  const std::size_t m = bytes[5];
  if (m == 0) throw format_error("code stream: m must be at least 1");
  std::uint64_t n = 0;
  for (int i = 0; i < 8; ++i) n |= std::uint64_t{bytes[6 + i]} << (8 * i);
  const unsigned bits = bits_per_sample(m);
  if (n > (std::uint64_t{1} << 60) / bits) throw format_error("code stream: sample count too large");
  const std::size_t expect = CodeStream::payload_bytes(n, bits);
  if (bytes.size() - 14 != expect) throw format_error("code stream: payload length mismatch");
  return {m, CodeStream{bits, std::vector<std::uint8_t>(bytes.begin() + 14, bytes.end()), n}};
}

inline void write_code_stream(std::ostream& os, const CodeStream& code, std::size_t m) {
  const auto bytes = serialize(code, m);
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline DecodedStream read_code_stream(std::istream& is) {
  std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
  return deserialize_code_stream(bytes);
}

}  // namespace qstable
