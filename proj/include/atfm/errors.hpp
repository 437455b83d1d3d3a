// atfm/errors.hpp

// Copyright 2026  ATFM authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#ifndef ATFM_ERRORS_HPP_
#define ATFM_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace atfm {

// Bad arguments, shapes, config values. CLI exit code 1.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite losses, failed factorizations, no-root conditions. Exit code 2.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

// Missing/corrupt files, unwritable paths. Exit code 3.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

#define ATFM_CHECK(cond, msg)                       \
  do {                                              \
    if (!(cond)) throw ::atfm::ValidationError(msg); \
  } while (0)

}  // namespace atfm

#endif  // ATFM_ERRORS_HPP_
