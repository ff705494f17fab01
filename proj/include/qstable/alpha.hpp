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

#include <charconv>
#include <cmath>
#include <compare>
#include <cstdlib>
#include <string>
#include <string_view>

#include "qstable/error.hpp"

namespace qstable {

/// Stability index of a symmetric stable law. Either a real in (0, 2] or the
/// symbolic limit 0+, which orders below every positive real.
class Alpha {
 public:
  /// Half-width of the window around 1 that is evaluated with the Cauchy
  /// closed forms instead of quadrature.
  static constexpr double kCauchyWindow = 1e-6;

  explicit Alpha(double value) : value_(value) {
    if (!(value > 0.0 && value <= 2.0)) {
      throw domain_error("alpha must lie in (0, 2], got " + std::to_string(value));
    }
  }

  static constexpr Alpha zero_plus() noexcept { return Alpha(); }

  constexpr bool is_zero_plus() const noexcept { return value_ == 0.0; }

  /// 0 for ZeroPlus, the real value otherwise.
  constexpr double value() const noexcept { return value_; }

  bool is_cauchy() const noexcept {
    return !is_zero_plus() && std::abs(value_ - 1.0) < kCauchyWindow;
  }
  constexpr bool is_gaussian() const noexcept { return value_ == 2.0; }
  bool has_closed_form() const noexcept { return is_zero_plus() || is_cauchy() || is_gaussian(); }

  constexpr auto operator<=>(const Alpha&) const noexcept = default;

  std::string to_string() const {
    if (is_zero_plus()) return "0+";
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, value_);
    return std::string(buf, res.ptr);
  }

  /// Accepts "0+", "0", "zero", "zeroplus" for the limit, otherwise a real.
  static Alpha parse(std::string_view text) {
    if (text == "0+" || text == "0" || text == "zero" || text == "zeroplus" || text == "ZeroPlus") {
      return zero_plus();
    }
    std::string s(text);
    char* end = nullptr;
    double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0') throw domain_error("cannot parse alpha '" + s + "'");
    return Alpha(v);
  }

 private:
  constexpr Alpha() noexcept = default;
  double value_ = 0.0;
};

}  // namespace qstable
