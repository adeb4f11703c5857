// Copyright 2026 The musclegail Authors
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

#ifndef MUSCLEGAIL_ERRORS_HPP_
#define MUSCLEGAIL_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace musclegail {

// Invalid user configuration. The CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite or out-of-domain numeric input to a model function.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Distribution parameters violate the family invariants.
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// An object was used before it was ready (e.g. an unfitted synergy map).
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// A numeric computation produced NaN where a value was required.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The simulator produced a non-finite state. `dump()` holds the offending
// state in human-readable form.
class SimulationFault : public std::runtime_error {
 public:
  SimulationFault(const std::string& what, std::string dump)
      : std::runtime_error(what + "\n" + dump), dump_(std::move(dump)) {}
  const std::string& dump() const { return dump_; }

 private:
  std::string dump_;
};

}  // namespace musclegail

#endif  // MUSCLEGAIL_ERRORS_HPP_
