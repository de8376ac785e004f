// Copyright 2026 The headflow Authors
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

#ifndef HEADFLOW_ERRORS_HPP
#define HEADFLOW_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace headflow {

/// Precondition violated by the caller (bad shape, out-of-range value).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A computation produced a non-finite value. `index` identifies where:
/// the Euler step, the transformer block or the training step.
class NumericFailure : public std::runtime_error {
 public:
  NumericFailure(const std::string& what, int index)
      : std::runtime_error(what + " (index " + std::to_string(index) + ")"), index_(index) {}
  int index() const noexcept { return index_; }

 private:
  int index_;
};

/// Internal bookkeeping went wrong (e.g. an untagged frame in a window).
class ConsistencyError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Malformed user input: config, scenario, checkpoint. `line` is 0 when
/// the location is unknown.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what, int line = 0)
      : std::runtime_error(line > 0 ? what + " (line " + std::to_string(line) + ")" : what),
        line_(line) {}
  int line() const noexcept { return line_; }

 private:
  int line_;
};

}  // namespace headflow

#endif  // HEADFLOW_ERRORS_HPP
