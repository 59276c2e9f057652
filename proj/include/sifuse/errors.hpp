/* Copyright 2026 The sifuse Authors. All Rights Reserved.

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

#ifndef SIFUSE_ERRORS_HPP_
#define SIFUSE_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace sifuse {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor rank or extent does not match what an operation expects.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

// NaN or Inf produced or consumed where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

class GenerationError : public Error {
 public:
  using Error::Error;
};

class OptimizerError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace sifuse

#endif  // SIFUSE_ERRORS_HPP_
