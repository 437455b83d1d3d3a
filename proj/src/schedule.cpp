// schedule.cpp

// Copyright 2026  ATFM authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#include "atfm/schedule.hpp"

#include <cmath>
#include <string>

#include "atfm/errors.hpp"

namespace atfm {

namespace {

Eigen::MatrixXd cholesky_or_throw(const Eigen::MatrixXd& sigma, const char* where) {
  ATFM_CHECK(sigma.rows() == sigma.cols(), std::string(where) + ": matrix not square");
  if (!sigma.isApprox(sigma.transpose(), 1e-12))
    throw NumericalError(std::string(where) + ": matrix not symmetric");
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success)
    throw NumericalError(std::string(where) + ": Cholesky failed, matrix not positive definite");
  return llt.matrixL();
}

}  // namespace

void Schedule::validate() const {
  ATFM_CHECK(beta_min > 0.0, "schedule: beta_min must be > 0");
  ATFM_CHECK(beta_max >= beta_min, "schedule: beta_max must be >= beta_min");
  ATFM_CHECK(horizon > 0.0, "schedule: horizon must be > 0");
  ATFM_CHECK(steps >= 1, "schedule: steps must be >= 1");
}

double alpha(const Schedule& sched, double tau) {
  sched.validate();
  ATFM_CHECK(tau >= 0.0 && tau <= sched.horizon, "alpha: tau outside [0, T]");
  const double integral =
      sched.beta_min * tau + (sched.beta_max - sched.beta_min) * tau * tau / (2.0 * sched.horizon);
  return std::exp(-integral);
}

std::pair<Eigen::VectorXd, Eigen::MatrixXd> forward_marginal(const Schedule& sched,
                                                             const Eigen::VectorXd& mu0,
                                                             const Eigen::MatrixXd& sigma0,
                                                             double tau) {
  ATFM_CHECK(sigma0.rows() == mu0.size(), "forward_marginal: mu0/sigma0 dimension mismatch");
  cholesky_or_throw(sigma0, "forward_marginal");
  const double a = alpha(sched, tau);
  Eigen::VectorXd mean = std::sqrt(a) * mu0;
  Eigen::MatrixXd cov = a * sigma0;
  cov.diagonal().array() += 1.0 - a;
  return {std::move(mean), std::move(cov)};
}

std::pair<Eigen::MatrixXd, Eigen::VectorXd> truncation_factorization(const Schedule& sched,
                                                                     const Eigen::MatrixXd& sigma0,
                                                                     double tau) {
  const Eigen::MatrixXd chol = cholesky_or_throw(sigma0, "truncation_factorization");
  const double a = alpha(sched, tau);
  Eigen::MatrixXd factor = std::sqrt(a) * chol;
  Eigen::VectorXd diag = Eigen::VectorXd::Constant(sigma0.rows(), 1.0 - a);
  return {std::move(factor), std::move(diag)};
}

double find_truncation_time(const Schedule& sched, const Eigen::VectorXd& mu0,
                            const Eigen::MatrixXd& sigma0) {
  sched.validate();
  ATFM_CHECK(sigma0.rows() == mu0.size() && sigma0.cols() == mu0.size(),
             "find_truncation_time: dimension mismatch");
  const double mu_sq = mu0.squaredNorm();
  if (mu_sq <= 0.0)
    throw NumericalError("find_truncation_time: no-root, |mu0| is zero");
  const double ratio = sigma0.norm() / mu_sq;  // Frobenius over squared 2-norm
  const double alpha_end = alpha(sched, sched.horizon);
  if (!(ratio > 0.0) || ratio >= 1.0 - alpha_end)
    throw NumericalError("find_truncation_time: no-root, ratio outside (0, 1 - alpha(T))");

  // f(tau) = 1 - alpha(tau) - ratio is strictly increasing: f(0) = -ratio < 0,
  // f(T) > 0 by the admissibility check above.
  double lo = 0.0, hi = sched.horizon;
  double mid = 0.5 * (lo + hi);
  for (int iter = 0; iter < 200; ++iter) {
    mid = 0.5 * (lo + hi);
    const double f = 1.0 - alpha(sched, mid) - ratio;
    if (std::abs(f) < 1e-8) return mid;
    if (f < 0.0)
      lo = mid;
    else
      hi = mid;
  }
  throw NumericalError("find_truncation_time: bisection did not converge");
}

}  // namespace atfm
