// Copyright 2026 The HALO Lab Authors.
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

#ifndef HALO_ERROR_HPP_
#define HALO_ERROR_HPP_

#include <cstddef>
#include <stdexcept>
#include <string>

namespace halo {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class EnumerationTooLarge : public Error {
 public:
  using Error::Error;
};

class EmptyBatch : public Error {
 public:
  using Error::Error;
};

// A KTO microbatch needs at least two examples to form mismatched pairs.
class BatchTooSmall : public Error {
 public:
  using Error::Error;
};

class IncompatibleData : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(what), line_(line) {}
  // 1-based line number, 0 when not applicable.
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Non-finite loss or gradient during training.
class NumericalError : public Error {
 public:
  NumericalError(const std::string& what, long step)
      : Error(what), step_(step) {}
  long step() const { return step_; }

 private:
  long step_;
};

// Configuration document failed validation; path names the offending field
// (e.g. "loss.beta").
class ConfigError : public Error {
 public:
  ConfigError(const std::string& path, const std::string& what)
      : Error(path + ": " + what), path_(path) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

}  // namespace halo

#endif  // HALO_ERROR_HPP_
