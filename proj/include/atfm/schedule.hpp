// atfm/schedule.hpp
//
// Variance-preserving diffusion schedule with a linear beta(s) and its
// closed-form alpha(tau), the forward marginal it induces, the low-rank
// factorization of that marginal, and the bisection search for the time
// tau* at which a given target Gaussian is matched.

// Copyright 2026  ATFM authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#ifndef ATFM_SCHEDULE_HPP_
#define ATFM_SCHEDULE_HPP_

#include <Eigen/Dense>
#include <utility>

namespace atfm {

struct Schedule {
  double beta_min = 0.1;
  double beta_max = 20.0;
  double horizon = 1.0;  // T, normalized
  int steps = 1000;      // discrete grid size (lambda = 1/steps)

  void validate() const;
};

// alpha(tau) = exp(-(beta_min*tau + (beta_max-beta_min)*tau^2/(2T))),
// the closed form of exp(-int_0^tau beta(s) ds) for linear beta.
double alpha(const Schedule& sched, double tau);

// Marginal of the forward process started at N(mu0, sigma0):
// mean = sqrt(alpha)*mu0, cov = alpha*sigma0 + (1-alpha)*I.
// Throws NumericalError if sigma0 fails a Cholesky attempt.
std::pair<Eigen::VectorXd, Eigen::MatrixXd> forward_marginal(const Schedule& sched,
                                                             const Eigen::VectorXd& mu0,
                                                             const Eigen::MatrixXd& sigma0,
                                                             double tau);

// factor = sqrt(alpha)*chol(sigma0), diag = (1-alpha)*ones. Reconstructs the
// forward-marginal covariance as factor*factor^T + diag(diag).
std::pair<Eigen::MatrixXd, Eigen::VectorXd> truncation_factorization(const Schedule& sched,
                                                                     const Eigen::MatrixXd& sigma0,
                                                                     double tau);

// Bisection root of f(tau) = 1 - alpha(tau) - |sigma0|_F / |mu0|_2^2 with
// |f(tau*)| < 1e-8. Throws NumericalError("no-root...") when the ratio is not
// in (0, 1 - alpha(T)), i.e. the target cannot be matched on the horizon.
double find_truncation_time(const Schedule& sched, const Eigen::VectorXd& mu0,
                            const Eigen::MatrixXd& sigma0);

}  // namespace atfm

#endif  // ATFM_SCHEDULE_HPP_
