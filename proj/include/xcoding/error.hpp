/* Copyright 2026 The xcoding Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <stdexcept>
#include <string>

namespace xcoding {

// Base for all library failures. The CLI maps the subclasses onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad input shape, invalid configuration, malformed arguments.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Non-finite values, divergence, singular maps, exhausted retries.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Model, cross-coder, or dataset files that cannot be read back.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, int line = 0)
      : Error(line > 0 ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

class VersionError : public ParseError {
 public:
  using ParseError::ParseError;
};

}  // namespace xcoding
