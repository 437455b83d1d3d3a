// atfm/verify.hpp
//
// Numerical witness suites: schedule/factorization identities, bisection
// roots, Woodbury density consistency, flow-matching algebra, and the
// Hungarian-vs-brute-force comparison. Used by the `verify` CLI command and
// the acceptance tests.

// Copyright 2026  ATFM authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#ifndef ATFM_VERIFY_HPP_
#define ATFM_VERIFY_HPP_

#include <cstdint>
#include <string>
#include <vector>

namespace atfm {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

// Schedule marginal/factorization reconstruction, bisection roots, the
// quadrature check of alpha, and Woodbury-vs-dense density agreement.
// With break_cholesky an indefinite covariance is injected to exercise the
// failure path; the affected check then reports FAIL.
std::vector<CheckResult> verify_theorems(uint64_t seed, bool break_cholesky = false);

// Flow-matching identities, loss decomposition, Hungarian oracle agreement,
// and metric fixed points.
std::vector<CheckResult> verify_algebra(uint64_t seed);

}  // namespace atfm

#endif  // ATFM_VERIFY_HPP_
