// Copyright 2026 The simulmt Authors.
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

#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace simulmt {

using TokenId = std::int32_t;
using TokenSeq = std::vector<TokenId>;

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

/// Bad input: malformed arguments, files or requests. The CLI maps it to
/// exit status 1.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Failure while running an otherwise valid request (divergence, I/O).
/// The CLI maps it to exit status 2.
class RuntimeFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Wait-k lag. An empty value is k = infinity (wait until the source ends).
class WaitK {
 public:
  constexpr WaitK() = default;
  explicit WaitK(int k) : k_(k) {
    if (k < 1) throw ValidationError("wait-k lag must be >= 1");
  }
  static constexpr WaitK infinite() { return WaitK(); }

  bool is_infinite() const { return !k_.has_value(); }
  int value() const { return *k_; }
  std::string to_string() const {
    return k_ ? std::to_string(*k_) : std::string("inf");
  }
  static WaitK parse(const std::string& text);

  friend bool operator==(const WaitK&, const WaitK&) = default;

 private:
  std::optional<int> k_;
};

}  // namespace simulmt
