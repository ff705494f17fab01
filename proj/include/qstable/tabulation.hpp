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

// Lookup-table MLE for three-threshold (2-bit) schemes. The likelihood
// depends on the counts only through the occupancy fractions n_k/n and on
// the thresholds only through C_k/Lambda, so Lambda_hat/C_1 can be solved
// once per lattice point (n_1, n_2, n_3)/n = (i, j, k)/T and looked up.
//
// Cells with i + j + k <= T are stored in lexicographic order of (i, j, k).

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "qstable/alpha.hpp"
#include "qstable/coding.hpp"
#include "qstable/error.hpp"
#include "qstable/estimators.hpp"
#include "qstable/parallel.hpp"
#include "qstable/power_stable.hpp"

namespace qstable {

/// Stored in cells whose solve failed; lookups there fall back to the exact
/// solver on the actual counts.
inline constexpr double kTableSentinel = -1.0;

struct MleTable {
  Alpha alpha = Alpha::zero_plus();
  /// C_2/C_1, C_3/C_1.
  std::vector<double> threshold_ratios;
  std::uint16_t T = 0;
  std::vector<double> entries;

  std::size_t m() const noexcept { return threshold_ratios.size() + 1; }

  static std::size_t cell_count(std::size_t T) noexcept { return (T + 1) * (T + 2) * (T + 3) / 6; }

  /// Position of lattice point (i, j, k), i + j + k <= T.
  static std::size_t index(std::size_t T, std::size_t i, std::size_t j, std::size_t k) noexcept {
    auto cnt2 = [](std::size_t r) { return (r + 1) * (r + 2) / 2; };
    const std::size_t r = T - i;
    return cell_count(T) - cell_count(r) + cnt2(r) - cnt2(r - j) + k;
  }

  /// Thresholds (C_1, C_1 r_2, C_1 r_3).
  ThresholdScheme scheme(double C1) const {
    std::vector<double> c = {C1};
    for (double r : threshold_ratios) c.push_back(C1 * r);
    return ThresholdScheme(std::move(c), alpha);
  }

  bool operator==(const MleTable&) const = default;
};

namespace detail {

inline std::vector<double> ratios_of(const ThresholdScheme& scheme) {
  std::vector<double> r;
  for (std::size_t k = 1; k < scheme.m(); ++k) r.push_back(scheme[k] / scheme[0]);
  return r;
}

}  // namespace detail

/// Solves every lattice cell as an n = T sample with C_1 = 1 (boundary cells
/// go through the estimators' smoothing rule).
inline MleTable build_table(const ThresholdScheme& scheme, std::size_t T, unsigned threads = 1,
                            PowerStableOptions dist_options = {}) {
  if (scheme.m() != 3) throw usage_error("build_table supports three-threshold schemes");
  if (T < 2 || T > 65535) throw usage_error("table resolution T must lie in [2, 65535]");
  if (!scheme.strictly_increasing()) throw domain_error("build_table: thresholds must be strictly increasing");
  MleTable table;
  table.alpha = scheme.alpha();
  table.threshold_ratios = detail::ratios_of(scheme);
  table.T = static_cast<std::uint16_t>(T);
  table.entries.assign(MleTable::cell_count(T), kTableSentinel);
  const PowerStableDist dist{scheme.alpha(), dist_options};
  const ThresholdScheme unit = table.scheme(1.0);
  EstimatorOptions opt;
  opt.compute_variance = false;
  // One task per leading index i keeps the per-task overhead small.
  parallel_for(T + 1, threads, [&](std::size_t i) {
    for (std::size_t j = 0; i + j <= T; ++j) {
      for (std::size_t k = 0; i + j + k <= T; ++k) {
        const BinCounts c({i, j, k, T - i - j - k});
        double v = kTableSentinel;
        try {
          v = mle_multibit(c, unit, dist, opt).estimate;
        } catch (const estimation_error&) {
        }
        table.entries[MleTable::index(T, i, j, k)] = std::isfinite(v) && v > 0.0 ? v : kTableSentinel;
      }
    }
  });
  return table;
}

/// Nearest lattice point of the occupancy fractions. Each of n_1..n_3 is
/// rounded to the nearest multiple of n/T; if that leaves the simplex, the
/// component rounded up the most is lowered by one.
inline std::array<std::size_t, 3> lattice_point(const BinCounts& counts, std::size_t T) {
  if (counts.bins() != 4) throw usage_error("table lookup needs counts from three thresholds");
  const std::uint64_t n = counts.total();
  if (n == 0) throw usage_error("table lookup needs at least one sample");
  std::array<std::size_t, 3> idx{};
  std::array<double, 3> excess{};
  std::size_t sum = 0;
  for (std::size_t k = 0; k < 3; ++k) {
    const double x = static_cast<double>(counts[k]) / static_cast<double>(n) * static_cast<double>(T);
    idx[k] = static_cast<std::size_t>(std::llround(x));
    excess[k] = static_cast<double>(idx[k]) - x;
    sum += idx[k];
  }
  if (sum > T) {
    const std::size_t k = static_cast<std::size_t>(std::max_element(excess.begin(), excess.end()) - excess.begin());
    --idx[k];
  }
  return idx;
}

/// Lambda_hat = C1 * entry at the nearest lattice point.
inline double lookup(const MleTable& table, const BinCounts& counts, double C1) {
  if (!(C1 > 0.0) || !std::isfinite(C1)) throw domain_error("lookup: C1 must be positive");
  if (table.m() != 3 || table.entries.size() != MleTable::cell_count(table.T)) {
    throw usage_error("lookup: malformed table");
  }
  const auto [i, j, k] = lattice_point(counts, table.T);
  const double v = table.entries[MleTable::index(table.T, i, j, k)];
  if (v != kTableSentinel) return C1 * v;
  return mle_multibit(counts, table.scheme(C1)).estimate;
}

// File layout (little-endian): "SQTB", version u8, alpha tag u8 (0 = ZeroPlus,
// 1 = real) and alpha f64, m u8, T u16, m-1 ratios f64, entries f64.
inline constexpr std::array<char, 4> kTableMagic = {'S', 'Q', 'T', 'B'};
inline constexpr std::uint8_t kTableVersion = 1;

namespace detail {

inline void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_f64(std::vector<std::uint8_t>& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint8_t u8() {
    need(1);
    return bytes_[pos_++];
  }
  std::uint16_t u16() {
    need(2);
    const auto v = static_cast<std::uint16_t>(bytes_[pos_] | (bytes_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{bytes_[pos_ + i]} << (8 * i);
    pos_ += 8;
    return std::bit_cast<double>(v);
  }
  bool at_end() const noexcept { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t k) const {
    if (bytes_.size() - pos_ < k) throw format_error("table file truncated");
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::vector<std::uint8_t> serialize(const MleTable& table) {
  if (table.entries.size() != MleTable::cell_count(table.T)) throw usage_error("serialize: malformed table");
  std::vector<std::uint8_t> out(kTableMagic.begin(), kTableMagic.end());
  out.push_back(kTableVersion);
  out.push_back(table.alpha.is_zero_plus() ? 0 : 1);
  detail::put_f64(out, table.alpha.is_zero_plus() ? 0.0 : table.alpha.value());
  out.push_back(static_cast<std::uint8_t>(table.m()));
  out.push_back(static_cast<std::uint8_t>(table.T & 0xff));
  out.push_back(static_cast<std::uint8_t>(table.T >> 8));
  for (double r : table.threshold_ratios) detail::put_f64(out, r);
  for (double e : table.entries) detail::put_f64(out, e);
  return out;
}

inline MleTable deserialize_table(std::span<const std::uint8_t> bytes) {
  detail::ByteReader in(bytes);
  for (char c : kTableMagic) {
    if (in.u8() != static_cast<std::uint8_t>(c)) throw format_error("table file: bad magic");
  }
  if (in.u8() != kTableVersion) throw format_error("table file: unsupported version");
  MleTable t;
  const std::uint8_t tag = in.u8();
  const double a = in.f64();
  if (tag == 0) {
    t.alpha = Alpha::zero_plus();
  } else if (tag == 1) {
    try {
      t.alpha = Alpha(a);
    } catch (const domain_error&) {
      throw format_error("table file: alpha out of range");
    }
  } else {
    throw format_error("table file: unknown alpha tag");
  }
  const std::uint8_t m = in.u8();
  if (m != 3) throw format_error("table file: only three-threshold tables are supported");
  t.T = in.u16();
  if (t.T < 2) throw format_error("table file: T must be at least 2");
  for (std::size_t k = 1; k < m; ++k) t.threshold_ratios.push_back(in.f64());
  const std::size_t cells = MleTable::cell_count(t.T);
  if (bytes.size() < cells * 8) throw format_error("table file truncated");
  t.entries.reserve(cells);
  for (std::size_t c = 0; c < cells; ++c) t.entries.push_back(in.f64());
  if (!in.at_end()) throw format_error("table file: trailing bytes");
  return t;
}

inline void save_table(const MleTable& table, const std::string& path) {
  const auto bytes = serialize(table);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw std::runtime_error("write to " + path + " failed");
}

inline MleTable load_table(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
  return deserialize_table(bytes);
}

}  // namespace qstable
