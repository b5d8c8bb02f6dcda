/*
 * Copyright 2026 The ranklab Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

namespace ranklab {

/// Violation of an API precondition or internal invariant.
class ContractError : public std::logic_error {
public:
  using std::logic_error::logic_error;
};

/// Bad user-facing input: config files, flags, corpus files.
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

namespace detail {

template <typename... Args>
std::string concat(Args&&... args) {
  std::ostringstream os;
  (os << ... << args);
  return os.str();
}

} // namespace detail

template <typename... Args>
void check(bool cond, Args&&... args) {
  if (!cond) throw ContractError(detail::concat(std::forward<Args>(args)...));
}

template <typename... Args>
void check_config(bool cond, Args&&... args) {
  if (!cond) throw ConfigError(detail::concat(std::forward<Args>(args)...));
}

/// Single RNG type used everywhere; all randomness flows through seeded
/// instances of this so runs are reproducible.
using Rng = std::mt19937_64;

} // namespace ranklab
