/*
 * Copyright 2026 The GAMMLI Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef GAMMLI_ERROR_HPP_
#define GAMMLI_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace gammli {

// Bad input: malformed files, inconsistent shapes, out-of-range arguments.
// The CLI maps this family to exit code 2.
class ValidationError : public std::invalid_argument {
 public:
  explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

class SchemaError : public ValidationError {
 public:
  explicit SchemaError(const std::string& what) : ValidationError(what) {}
};

class ParseError : public ValidationError {
 public:
  explicit ParseError(const std::string& what) : ValidationError(what) {}
};

class VersionError : public ValidationError {
 public:
  explicit VersionError(const std::string& what) : ValidationError(what) {}
};

// Failure while fitting (non-finite loss, singular solve, ...).
class TrainingError : public std::runtime_error {
 public:
  explicit TrainingError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace gammli

#endif  // GAMMLI_ERROR_HPP_
