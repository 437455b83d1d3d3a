// test_schedule.cpp

// Copyright 2026  ATFM authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "atfm/errors.hpp"
#include "atfm/rng.hpp"
#include "atfm/schedule.hpp"

using namespace atfm;

namespace {

Eigen::MatrixXd random_psd(int d, uint64_t seed, double jitter = 0.05) {
  RngStream rng(seed);
  Eigen::MatrixXd a(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) a(i, j) = rng.normal();
  Eigen::MatrixXd s = a * a.transpose() / d;
  s.diagonal().array() += jitter;
  return s;
}

}  // namespace

TEST_CASE("alpha closed form") {
  Schedule sched;  // beta 0.1..20 over T = 1
  CHECK(alpha(sched, 0.0) == 1.0);
  // integral at tau = 1: 0.1 + 19.9/2 = 10.05
  CHECK(alpha(sched, 1.0) == doctest::Approx(std::exp(-10.05)).epsilon(1e-12));
  CHECK(alpha(sched, 1.0) == doctest::Approx(4.32e-5).epsilon(1e-2));
  CHECK_THROWS_AS(alpha(sched, -0.1), ValidationError);
  CHECK_THROWS_AS(alpha(sched, 1.1), ValidationError);

  // strictly decreasing on a grid
  double prev = alpha(sched, 0.0);
  for (int i = 1; i <= 100; ++i) {
    const double cur = alpha(sched, i / 100.0);
    CHECK(cur < prev);
    prev = cur;
  }
}

TEST_CASE("alpha agrees with trapezoid quadrature within 1e-6 relative") {
  Schedule sched;
  const auto beta = [&](double s) {
    return sched.beta_min + (sched.beta_max - sched.beta_min) * s / sched.horizon;
  };
  for (double tau : {0.1, 0.37, 0.5, 0.81, 1.0}) {
    const int n = 10000;
    double integral = 0.0;
    for (int i = 0; i < n; ++i) {
      const double s0 = tau * i / n, s1 = tau * (i + 1) / n;
      integral += 0.5 * (beta(s0) + beta(s1)) * (s1 - s0);
    }
    const double quad = std::exp(-integral);
    CHECK(std::abs(quad - alpha(sched, tau)) / alpha(sched, tau) < 1e-6);
  }
}

TEST_CASE("forward marginal fixed points") {
  Schedule sched;
  const int d = 4;
  const Eigen::MatrixXd sigma0 = random_psd(d, 11);
  Eigen::VectorXd mu0(d);
  mu0 << 1.0, -2.0, 0.5, 3.0;

  {
    const auto [mean, cov] = forward_marginal(sched, mu0, sigma0, 0.0);
    CHECK((mean - mu0).norm() == 0.0);
    CHECK((cov - sigma0).norm() == 0.0);
  }
  {
    const double a_end = alpha(sched, 1.0);
    const auto [mean, cov] = forward_marginal(sched, mu0, sigma0, 1.0);
    CHECK((cov - Eigen::MatrixXd::Identity(d, d)).cwiseAbs().maxCoeff() < 1e-4);
    CHECK(mean.norm() <= std::sqrt(a_end) * mu0.norm() + 1e-15);
  }
  {
    // identity covariance is a fixed point of the interpolation
    for (double tau : {0.2, 0.6, 0.9}) {
      const auto [mean, cov] =
          forward_marginal(sched, mu0, Eigen::MatrixXd::Identity(d, d), tau);
      CHECK((cov - Eigen::MatrixXd::Identity(d, d)).cwiseAbs().maxCoeff() < 1e-14);
    }
  }
  CHECK_THROWS_AS(forward_marginal(sched, mu0, -sigma0, 0.5), NumericalError);
}

TEST_CASE("truncation factorization reconstructs the marginal covariance") {
  Schedule sched;
  {
    // alpha = 0.25 on the identity: factor = 0.5 I, diag = 0.75
    // invert alpha analytically: beta_min*tau + (beta_max-beta_min)*tau^2/2 = ln 4
    const double a = sched.beta_max - sched.beta_min, b = sched.beta_min;
    const double c = -std::log(4.0);
    const double tau = (-b + std::sqrt(b * b - 2.0 * a * c)) / a;
    CHECK(alpha(sched, tau) == doctest::Approx(0.25).epsilon(1e-12));
    const auto [factor, diag] =
        truncation_factorization(sched, Eigen::MatrixXd::Identity(3, 3), tau);
    CHECK((factor - 0.5 * Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-12);
    for (int i = 0; i < 3; ++i) CHECK(diag[i] == doctest::Approx(0.75).epsilon(1e-12));
  }
  {
    const Eigen::MatrixXd sigma0 = random_psd(5, 21);
    const double tau = 0.3;
    const auto [factor, diag] = truncation_factorization(sched, sigma0, tau);
    Eigen::VectorXd mu0 = Eigen::VectorXd::Ones(5);
    const auto [mean, cov] = forward_marginal(sched, mu0, sigma0, tau);
    Eigen::MatrixXd rebuilt = factor * factor.transpose();
    rebuilt.diagonal() += diag;
    CHECK((rebuilt - cov).norm() < 1e-10);
  }
  {
    // tau = 0: factor = chol(sigma0), diag = 0
    const Eigen::MatrixXd sigma0 = random_psd(4, 22);
    const auto [factor, diag] = truncation_factorization(sched, sigma0, 0.0);
    CHECK((factor * factor.transpose() - sigma0).norm() < 1e-12);
    CHECK(diag.cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("find_truncation_time: constructed root, no-root, monotonicity") {
  Schedule sched;
  {
    // build inputs whose ratio equals 1 - alpha(T/2), so tau* = T/2
    const double target = 1.0 - alpha(sched, 0.5);
    const int d = 3;
    Eigen::VectorXd mu0 = Eigen::VectorXd::Zero(d);
    mu0[0] = 1.0;  // |mu0|^2 = 1
    const Eigen::MatrixXd sigma0 =
        (target / std::sqrt(static_cast<double>(d))) * Eigen::MatrixXd::Identity(d, d);
    CHECK(std::abs(sigma0.norm() - target) < 1e-14);
    const double tau_star = find_truncation_time(sched, mu0, sigma0);
    CHECK(std::abs(tau_star - 0.5) < 1e-6);
  }
  {
    // ratio >= 1 - alpha(T): no root on the horizon
    Eigen::VectorXd mu0 = Eigen::VectorXd::Ones(3) * 0.2;  // |mu0|^2 = 0.12
    CHECK_THROWS_AS(find_truncation_time(sched, mu0, Eigen::MatrixXd::Identity(3, 3)),
                    NumericalError);
    CHECK_THROWS_AS(
        find_truncation_time(sched, Eigen::VectorXd::Zero(3), Eigen::MatrixXd::Identity(3, 3)),
        NumericalError);
  }
  {
    // doubling mu0 quarters the ratio and strictly decreases tau*
    const Eigen::MatrixXd sigma0 = 0.05 * random_psd(4, 31);
    Eigen::VectorXd mu0(4);
    mu0 << 0.9, -0.4, 0.3, 0.7;
    const double tau_a = find_truncation_time(sched, mu0, sigma0);
    const double tau_b = find_truncation_time(sched, 2.0 * mu0, sigma0);
    CHECK(tau_b < tau_a);
  }
}

TEST_CASE("bisection residual below 1e-8 for random admissible instances") {
  Schedule sched;
  const double alpha_end = alpha(sched, sched.horizon);
  RngStream rng(41);
  for (int trial = 0; trial < 20; ++trial) {
    const int d = 2 + static_cast<int>(rng.next_index(5));
    Eigen::VectorXd mu0(d);
    for (int i = 0; i < d; ++i) mu0[i] = 1.0 + rng.uniform();
    Eigen::MatrixXd sigma0 = random_psd(d, 500 + trial);
    const double ratio = rng.uniform(0.05, 0.95) * (1.0 - alpha_end);
    sigma0 *= ratio * mu0.squaredNorm() / sigma0.norm();
    const double tau_star = find_truncation_time(sched, mu0, sigma0);
    const double f = 1.0 - alpha(sched, tau_star) - sigma0.norm() / mu0.squaredNorm();
    CHECK(std::abs(f) < 1e-8);
    CHECK(tau_star > 0.0);
    CHECK(tau_star < sched.horizon);
  }
}

TEST_CASE("schedule validation") {
  Schedule bad;
  bad.beta_min = 0.0;
  CHECK_THROWS_AS(alpha(bad, 0.5), ValidationError);
  bad.beta_min = 1.0;
  bad.beta_max = 0.5;
  CHECK_THROWS_AS(alpha(bad, 0.5), ValidationError);
}
