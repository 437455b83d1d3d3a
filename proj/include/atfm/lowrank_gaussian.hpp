// atfm/lowrank_gaussian.hpp
//
// Explicit truncation-point Gaussian N(mu, D D^T + diag(L)) over a flattened
// logit map. The low-rank-plus-diagonal structure keeps sampling O(d*r) and
// density evaluation at r x r dense solves via the Woodbury identity.

// Copyright 2026  ATFM authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#ifndef ATFM_LOWRANK_GAUSSIAN_HPP_
#define ATFM_LOWRANK_GAUSSIAN_HPP_

#include <Eigen/Dense>
#include <vector>

#include "atfm/rng.hpp"

namespace atfm {

// Floor on the diagonal term; keeps the covariance positive definite and the
// Woodbury solves well-conditioned.
constexpr double kDiagFloor = 1e-5;

struct LowRankGaussian {
  Eigen::VectorXd mu;      // length d
  Eigen::MatrixXd factor;  // d x r
  Eigen::VectorXd diag;    // length d, every entry >= kDiagFloor
  int rank = 0;

  int dim() const { return static_cast<int>(mu.size()); }
};

// Validates shapes and the diagonal floor.
LowRankGaussian make_lowrank_gaussian(Eigen::VectorXd mu, Eigen::MatrixXd factor,
                                      Eigen::VectorXd diag);

// One draw z = mu + D eps_r + sqrt(diag) .* eps_d consuming eps_r then eps_d
// from the stream.
Eigen::VectorXd sample_one(const LowRankGaussian& dist, RngStream& stream);

// `count` draws on disjoint streams derived from (seed, sample index), so the
// i-th draw does not depend on count or evaluation order.
std::vector<Eigen::VectorXd> sample(const LowRankGaussian& dist, uint64_t seed, int count);

// log N(z; mu, D D^T + diag(L)) via Woodbury + matrix determinant lemma.
double log_density(const LowRankGaussian& dist, const Eigen::VectorXd& z);

// D D^T + diag(L), exactly symmetric. Test/verification use; d <= 4096.
Eigen::MatrixXd covariance_dense(const LowRankGaussian& dist);

}  // namespace atfm

#endif  // ATFM_LOWRANK_GAUSSIAN_HPP_
