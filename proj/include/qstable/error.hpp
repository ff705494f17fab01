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

#include <stdexcept>
#include <string>

namespace qstable {

/// Argument outside the mathematical domain of an operation (z <= 0, p not in
/// (0,1), ZeroPlus passed to a sampler that needs a real alpha, ...).
class domain_error : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Wrong shape of input for the requested operation (e.g. m != 1 for the
/// 1-bit estimator).
class usage_error : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Direction in which a likelihood runs off to the boundary of the parameter
/// space when no interior maximum exists.
enum class boundary_direction { none, toward_zero, toward_infinity };

class estimation_error : public std::runtime_error {
 public:
  estimation_error(const std::string& what, boundary_direction dir = boundary_direction::none)
      : std::runtime_error(what), direction_(dir) {}

  boundary_direction direction() const noexcept { return direction_; }

 private:
  boundary_direction direction_;
};

/// Malformed serialized data: bad magic, unsupported version, truncation.
class format_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace qstable
