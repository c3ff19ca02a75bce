/*
 * Copyright 2026 The flowclas Authors.
 *
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

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace flowclas {

// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes do not conform to an operation's broadcasting/contraction rule.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// An operation produced a NaN or infinity.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Invalid argument, configuration or precondition.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Malformed or truncated file; carries the offending byte offset.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : Error(what + " (at byte " + std::to_string(offset) + ")"), detail_(what), offset_(offset) {}

  const std::string& detail() const { return detail_; }
  std::uint64_t offset() const { return offset_; }

 private:
  std::string detail_;
  std::uint64_t offset_;
};

// A batch whose masks leave no usable pixels for a loss term.
class DegenerateBatch : public Error {
 public:
  using Error::Error;
};

}  // namespace flowclas
