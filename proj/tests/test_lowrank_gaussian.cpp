// test_lowrank_gaussian.cpp

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
#include "atfm/lowrank_gaussian.hpp"
#include "oracles.hpp"

using namespace atfm;

namespace {

LowRankGaussian random_instance(int d, int r, uint64_t seed, double diag_lo = 0.1) {
  RngStream rng(seed);
  Eigen::VectorXd mu(d), diag(d);
  Eigen::MatrixXd factor(d, r);
  for (int i = 0; i < d; ++i) {
    mu[i] = rng.normal();
    diag[i] = diag_lo + rng.uniform();
  }
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < r; ++j) factor(i, j) = 0.7 * rng.normal();
  return make_lowrank_gaussian(mu, factor, diag);
}

}  // namespace

TEST_CASE("zero factor with unit diag samples standard normal") {
  const int d = 8;
  const LowRankGaussian g = make_lowrank_gaussian(
      Eigen::VectorXd::Zero(d), Eigen::MatrixXd::Zero(d, 2), Eigen::VectorXd::Ones(d));
  const int count = 100000;
  const auto draws = sample(g, 99, count);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(d), second = Eigen::VectorXd::Zero(d);
  for (const auto& z : draws) {
    mean += z;
    second += z.cwiseProduct(z);
  }
  mean /= count;
  second /= count;
  for (int i = 0; i < d; ++i) {
    const double var = second[i] - mean[i] * mean[i];
    CHECK(var > 0.97);
    CHECK(var < 1.03);
  }
}

TEST_CASE("rank zero reduces to mu + sqrt(diag) noise exactly") {
  const int d = 5;
  Eigen::VectorXd mu(d), diag(d);
  for (int i = 0; i < d; ++i) {
    mu[i] = i - 2.0;
    diag[i] = 0.5 + 0.25 * i;
  }
  const LowRankGaussian g = make_lowrank_gaussian(mu, Eigen::MatrixXd(d, 0), diag);
  RngStream s1(7), s2(7);
  const Eigen::VectorXd z = sample_one(g, s1);
  for (int i = 0; i < d; ++i) {
    const double expected = mu[i] + std::sqrt(diag[i]) * s2.normal();
    CHECK(z[i] == expected);
  }
}

TEST_CASE("empirical covariance of 200k draws matches dense covariance") {
  const LowRankGaussian g = random_instance(4, 2, 123);
  const Eigen::MatrixXd target = covariance_dense(g);
  const int count = 200000;
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(4);
  Eigen::MatrixXd second = Eigen::MatrixXd::Zero(4, 4);
  for (int i = 0; i < count; ++i) {
    RngStream s(77, {static_cast<uint64_t>(i)});
    const Eigen::VectorXd z = sample_one(g, s);
    mean += z;
    second += z * z.transpose();
  }
  mean /= count;
  second /= count;
  const Eigen::MatrixXd empirical = second - mean * mean.transpose();
  CHECK((empirical - target).norm() / target.norm() < 0.05);
}

TEST_CASE("log density: standard normal at the mode") {
  const LowRankGaussian g = make_lowrank_gaussian(
      Eigen::VectorXd::Zero(1), Eigen::MatrixXd(1, 0), Eigen::VectorXd::Ones(1));
  CHECK(log_density(g, Eigen::VectorXd::Zero(1)) == doctest::Approx(-0.9189385).epsilon(1e-6));
}

TEST_CASE("woodbury log density matches the dense LU oracle") {
  // d=3, r=1 spec instance plus a sweep of random shapes.
  {
    const LowRankGaussian g = random_instance(3, 1, 5);
    RngStream s(6);
    const Eigen::VectorXd z = sample_one(g, s);
    const double dense = test::dense_gaussian_log_density(g.mu, covariance_dense(g), z);
    CHECK(std::abs(log_density(g, z) - dense) < 1e-8);
  }
  RngStream shapes(404);
  for (int trial = 0; trial < 100; ++trial) {
    const int d = 1 + static_cast<int>(shapes.next_index(20));
    const int r = static_cast<int>(shapes.next_index(std::min(d, 5) + 1));
    const LowRankGaussian g = random_instance(d, r, 1000 + trial);
    RngStream s(2000 + trial);
    Eigen::VectorXd z(d);
    for (int i = 0; i < d; ++i) z[i] = g.mu[i] + 2.0 * s.normal();
    const double dense = test::dense_gaussian_log_density(g.mu, covariance_dense(g), z);
    CHECK(std::abs(log_density(g, z) - dense) < 1e-8);
  }
}

TEST_CASE("mode is the density maximum under small perturbations") {
  const LowRankGaussian g = random_instance(6, 2, 31);
  const double at_mode = log_density(g, g.mu);
  RngStream rng(32);
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::VectorXd delta(6);
    for (int i = 0; i < 6; ++i) delta[i] = 0.01 * rng.normal();
    CHECK(log_density(g, g.mu + delta) < at_mode);
  }
}

TEST_CASE("covariance_dense is exactly symmetric and correct on hand cases") {
  {
    const LowRankGaussian g = random_instance(7, 3, 61);
    const Eigen::MatrixXd cov = covariance_dense(g);
    CHECK((cov - cov.transpose()).cwiseAbs().maxCoeff() == 0.0);
  }
  {
    // D = 0 -> diag(L)
    Eigen::VectorXd diag(2);
    diag << 0.3, 0.9;
    const LowRankGaussian g =
        make_lowrank_gaussian(Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Zero(2, 1), diag);
    const Eigen::MatrixXd cov = covariance_dense(g);
    CHECK(cov(0, 0) == doctest::Approx(0.3));
    CHECK(cov(1, 1) == doctest::Approx(0.9));
    CHECK(cov(0, 1) == 0.0);
  }
  {
    // r=1, D = (1,1)^T, diag = (0.5, 0.5) -> [[1.5, 1], [1, 1.5]]
    Eigen::MatrixXd factor(2, 1);
    factor << 1.0, 1.0;
    const LowRankGaussian g = make_lowrank_gaussian(
        Eigen::VectorXd::Zero(2), factor, Eigen::VectorXd::Constant(2, 0.5));
    const Eigen::MatrixXd cov = covariance_dense(g);
    CHECK(cov(0, 0) == doctest::Approx(1.5));
    CHECK(cov(0, 1) == doctest::Approx(1.0));
    CHECK(cov(1, 0) == doctest::Approx(1.0));
    CHECK(cov(1, 1) == doctest::Approx(1.5));
  }
}

TEST_CASE("sampling is bit-deterministic and stream-disjoint") {
  const LowRankGaussian g = random_instance(10, 3, 71);
  const auto a = sample(g, 42, 8);
  const auto b = sample(g, 42, 8);
  for (int i = 0; i < 8; ++i) CHECK(a[i] == b[i]);
  // the i-th draw does not depend on count
  const auto c = sample(g, 42, 3);
  for (int i = 0; i < 3; ++i) CHECK(a[i] == c[i]);
}

TEST_CASE("empirical mean converges to mu at the standard-error bound") {
  const LowRankGaussian g = random_instance(4, 2, 81);
  const Eigen::MatrixXd cov = covariance_dense(g);
  const double max_var = cov.diagonal().maxCoeff();
  const int count = 100000;
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(4);
  for (int i = 0; i < count; ++i) {
    RngStream s(82, {static_cast<uint64_t>(i)});
    mean += sample_one(g, s);
  }
  mean /= count;
  const double bound = 3.0 * std::sqrt(max_var / count);
  for (int i = 0; i < 4; ++i) CHECK(std::abs(mean[i] - g.mu[i]) <= bound);
}

TEST_CASE("constructor and log_density enforce the diag floor") {
  Eigen::VectorXd bad = Eigen::VectorXd::Constant(3, 1e-6);  // below 1e-5
  CHECK_THROWS_AS(
      make_lowrank_gaussian(Eigen::VectorXd::Zero(3), Eigen::MatrixXd::Zero(3, 1), bad),
      NumericalError);
  LowRankGaussian g = random_instance(3, 1, 91);
  g.diag[1] = 1e-6;
  CHECK_THROWS_AS(log_density(g, g.mu), NumericalError);
}

TEST_CASE("sample count precondition") {
  const LowRankGaussian g = random_instance(3, 1, 95);
  CHECK_THROWS_AS(sample(g, 1, 0), ValidationError);
}
