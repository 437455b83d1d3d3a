// lowrank_gaussian.cpp

// Copyright 2026  ATFM authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#include "atfm/lowrank_gaussian.hpp"

#include <cmath>

#include "atfm/errors.hpp"

namespace atfm {

LowRankGaussian make_lowrank_gaussian(Eigen::VectorXd mu, Eigen::MatrixXd factor,
                                      Eigen::VectorXd diag) {
  const auto d = mu.size();
  ATFM_CHECK(d >= 1, "lowrank_gaussian: dimension must be >= 1");
  ATFM_CHECK(factor.rows() == d, "lowrank_gaussian: factor row count != d");
  ATFM_CHECK(factor.cols() <= d, "lowrank_gaussian: rank must be <= d");
  ATFM_CHECK(diag.size() == d, "lowrank_gaussian: diag length != d");
  for (Eigen::Index i = 0; i < d; ++i)
    if (!(diag[i] >= kDiagFloor))
      throw NumericalError("lowrank_gaussian: diag entry below floor");
  LowRankGaussian g;
  g.rank = static_cast<int>(factor.cols());
  g.mu = std::move(mu);
  g.factor = std::move(factor);
  g.diag = std::move(diag);
  return g;
}

Eigen::VectorXd sample_one(const LowRankGaussian& dist, RngStream& stream) {
  const int d = dist.dim();
  const int r = dist.rank;
  Eigen::VectorXd eps_r(r);
  for (int j = 0; j < r; ++j) eps_r[j] = stream.normal();
  Eigen::VectorXd z(d);
  for (int i = 0; i < d; ++i)
    z[i] = dist.mu[i] + std::sqrt(dist.diag[i]) * stream.normal();
  if (r > 0) z += dist.factor * eps_r;
  return z;
}

std::vector<Eigen::VectorXd> sample(const LowRankGaussian& dist, uint64_t seed, int count) {
  ATFM_CHECK(count >= 1, "sample: count must be >= 1");
  std::vector<Eigen::VectorXd> out;
  out.reserve(count);
  RngStream master(seed);
  for (int i = 0; i < count; ++i) {
    RngStream s = master.derive({static_cast<uint64_t>(i)});
    out.push_back(sample_one(dist, s));
  }
  return out;
}

double log_density(const LowRankGaussian& dist, const Eigen::VectorXd& z) {
  const int d = dist.dim();
  const int r = dist.rank;
  ATFM_CHECK(z.size() == d, "log_density: point has wrong dimension");
  for (int i = 0; i < d; ++i)
    if (!(dist.diag[i] >= kDiagFloor))
      throw NumericalError("log_density: diag entry below floor");

  const Eigen::VectorXd y = z - dist.mu;
  const Eigen::VectorXd u = y.cwiseQuotient(dist.diag);  // L^{-1} y

  double log_det = dist.diag.array().log().sum();
  double quad = y.dot(u);

  if (r > 0) {
    // M = I_r + D^T L^{-1} D;  Sigma^{-1} = L^{-1} - L^{-1} D M^{-1} D^T L^{-1}
    const Eigen::MatrixXd linv_d = dist.diag.cwiseInverse().asDiagonal() * dist.factor;
    Eigen::MatrixXd cap = Eigen::MatrixXd::Identity(r, r);
    cap.noalias() += dist.factor.transpose() * linv_d;
    Eigen::LLT<Eigen::MatrixXd> llt(cap);
    if (llt.info() != Eigen::Success)
      throw NumericalError("log_density: capacitance matrix not positive definite");
    const Eigen::VectorXd t = dist.factor.transpose() * u;
    quad -= t.dot(llt.solve(t));
    log_det += 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  }

  constexpr double kLog2Pi = 1.8378770664093454836;  // ln(2*pi)
  return -0.5 * (d * kLog2Pi + log_det + quad);
}

Eigen::MatrixXd covariance_dense(const LowRankGaussian& dist) {
  const int d = dist.dim();
  ATFM_CHECK(d <= 4096, "covariance_dense: d too large to materialize");
  Eigen::MatrixXd cov(d, d);
  // Fill the upper triangle and mirror so the result is exactly symmetric.
  for (int i = 0; i < d; ++i) {
    for (int j = i; j < d; ++j) {
      double s = dist.rank > 0 ? dist.factor.row(i).dot(dist.factor.row(j)) : 0.0;
      if (i == j) s += dist.diag[i];
      cov(i, j) = s;
      cov(j, i) = s;
    }
  }
  return cov;
}

}  // namespace atfm
