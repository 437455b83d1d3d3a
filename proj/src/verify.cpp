// verify.cpp

// Copyright 2026  ATFM authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#include "atfm/verify.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "atfm/errors.hpp"
#include "atfm/lowrank_gaussian.hpp"
#include "atfm/metrics.hpp"
#include "atfm/rng.hpp"
#include "atfm/schedule.hpp"
#include "atfm/sfm.hpp"

namespace atfm {

namespace {

Eigen::MatrixXd random_psd(int d, RngStream& rng, double jitter = 0.05) {
  Eigen::MatrixXd a(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) a(i, j) = rng.normal();
  Eigen::MatrixXd s = a * a.transpose() / d;
  s.diagonal().array() += jitter;
  return s;
}

Eigen::VectorXd random_vector(int d, RngStream& rng, double scale = 1.0) {
  Eigen::VectorXd v(d);
  for (int i = 0; i < d; ++i) v[i] = scale * rng.normal();
  return v;
}

Grid random_grid(int h, int w, RngStream& rng, double scale = 1.0) {
  Grid g(h, w);
  for (double& x : g.v) x = scale * rng.normal();
  return g;
}

Mask random_mask(int h, int w, RngStream& rng, double p = 0.4) {
  Mask m(h, w);
  for (auto& b : m.v) b = rng.uniform() < p ? 1 : 0;
  return m;
}

// Dense-covariance log-density, the oracle the Woodbury path is checked
// against.
double dense_log_density(const LowRankGaussian& g, const Eigen::VectorXd& z) {
  const Eigen::MatrixXd cov = covariance_dense(g);
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  const Eigen::VectorXd y = z - g.mu;
  const double quad = y.dot(llt.solve(y));
  const double log_det =
      2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  constexpr double kLog2Pi = 1.8378770664093454836;
  return -0.5 * (g.dim() * kLog2Pi + log_det + quad);
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(3);
  os << v;
  return os.str();
}

CheckResult check_alpha_quadrature(uint64_t seed) {
  Schedule sched;
  RngStream rng(seed, {0x50});
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const double tau = rng.uniform() * sched.horizon;
    // Trapezoid quadrature of beta on a 10,000-point grid.
    const int n = 10000;
    double integral = 0.0;
    for (int i = 0; i < n; ++i) {
      const double s0 = tau * i / n, s1 = tau * (i + 1) / n;
      const auto beta = [&](double s) {
        return sched.beta_min + (sched.beta_max - sched.beta_min) * s / sched.horizon;
      };
      integral += 0.5 * (beta(s0) + beta(s1)) * (s1 - s0);
    }
    const double quad_alpha = std::exp(-integral);
    const double closed = alpha(sched, tau);
    worst = std::max(worst, std::abs(quad_alpha - closed) / closed);
  }
  return {"alpha-closed-form-vs-quadrature", worst < 1e-6, "max rel err " + fmt(worst)};
}

CheckResult check_factorization_reconstruction(uint64_t seed, bool break_cholesky) {
  Schedule sched;
  RngStream rng(seed, {0x51});
  double worst = 0.0;
  try {
    for (int trial = 0; trial < 50; ++trial) {
      const int d = 2 + static_cast<int>(rng.next_index(7));  // d <= 8
      Eigen::MatrixXd sigma0 = random_psd(d, rng);
      if (break_cholesky && trial == 10) sigma0(0, 0) = -4.0;  // injected fault
      const Eigen::VectorXd mu0 = random_vector(d, rng);
      const double tau = rng.uniform(0.05, sched.horizon);
      const auto [mean, cov] = forward_marginal(sched, mu0, sigma0, tau);
      const auto [factor, diag] = truncation_factorization(sched, sigma0, tau);
      Eigen::MatrixXd rebuilt = factor * factor.transpose();
      rebuilt.diagonal() += diag;
      worst = std::max(worst, (rebuilt - cov).norm());
    }
  } catch (const NumericalError& e) {
    return {"theorem1-factorization-reconstruction", false, e.what()};
  }
  return {"theorem1-factorization-reconstruction", worst < 1e-10,
          "max frobenius err " + fmt(worst)};
}

CheckResult check_bisection_root(uint64_t seed) {
  Schedule sched;
  RngStream rng(seed, {0x52});
  double worst = 0.0;
  const double alpha_end = alpha(sched, sched.horizon);
  for (int trial = 0; trial < 20; ++trial) {
    const int d = 2 + static_cast<int>(rng.next_index(5));
    const Eigen::VectorXd mu0 = random_vector(d, rng, 2.0);
    // Scale a random PSD matrix so the ratio lands strictly inside (0, 1-alpha(T)).
    Eigen::MatrixXd sigma0 = random_psd(d, rng);
    const double target_ratio = rng.uniform(0.05, 0.95) * (1.0 - alpha_end);
    sigma0 *= target_ratio * mu0.squaredNorm() / sigma0.norm();
    const double tau_star = find_truncation_time(sched, mu0, sigma0);
    const double f = 1.0 - alpha(sched, tau_star) - sigma0.norm() / mu0.squaredNorm();
    worst = std::max(worst, std::abs(f));
    if (tau_star <= 0.0 || tau_star >= sched.horizon)
      return {"theorem2-bisection-root", false, "root outside (0, T)"};
  }
  // Inadmissible ratio must raise the no-root error.
  bool no_root_raised = false;
  try {
    Eigen::VectorXd mu0 = Eigen::VectorXd::Ones(3) * 0.1;  // tiny norm -> huge ratio
    find_truncation_time(sched, mu0, Eigen::MatrixXd::Identity(3, 3));
  } catch (const NumericalError&) {
    no_root_raised = true;
  }
  return {"theorem2-bisection-root", worst < 1e-8 && no_root_raised,
          "max |f(tau*)| " + fmt(worst) + (no_root_raised ? "" : "; no-root not raised")};
}

CheckResult check_woodbury(uint64_t seed) {
  RngStream rng(seed, {0x53});
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int d = 1 + static_cast<int>(rng.next_index(20));
    const int r = static_cast<int>(rng.next_index(std::min(d, 5) + 1));
    Eigen::MatrixXd factor(d, r);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < r; ++j) factor(i, j) = rng.normal();
    Eigen::VectorXd diag(d);
    for (int i = 0; i < d; ++i) diag[i] = 0.1 + rng.uniform();
    const LowRankGaussian g =
        make_lowrank_gaussian(random_vector(d, rng), factor, diag);
    const Eigen::VectorXd z = g.mu + random_vector(d, rng, 1.5);
    worst = std::max(worst, std::abs(log_density(g, z) - dense_log_density(g, z)));
  }
  return {"woodbury-density-consistency", worst < 1e-8, "max abs err " + fmt(worst)};
}

CheckResult check_endpoint_identity(uint64_t seed) {
  RngStream rng(seed, {0x54});
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const Grid x0 = random_grid(6, 6, rng, 3.0);
    const Grid x1 = random_grid(6, 6, rng, 3.0);
    Grid direction(6, 6);
    for (size_t i = 0; i < direction.v.size(); ++i) direction.v[i] = x1.v[i] - x0.v[i];
    for (double t : {0.0, 0.3, 0.9, 1.0}) {
      const Grid x_t = ot_interpolate(x0, x1, t);
      const Grid proj = endpoint_projection(x_t, direction, t);
      for (size_t i = 0; i < proj.v.size(); ++i)
        worst = std::max(worst, std::abs(proj.v[i] - x1.v[i]));
    }
  }
  return {"endpoint-projection-identity", worst < 1e-12, "max abs err " + fmt(worst)};
}

CheckResult check_interpolation_linearity(uint64_t seed) {
  RngStream rng(seed, {0x55});
  bool endpoints_exact = true;
  double worst = 0.0;  // segment residual, should vanish to working precision
  for (int trial = 0; trial < 20; ++trial) {
    const Grid x0 = random_grid(5, 7, rng, 2.0);
    const Grid x1 = random_grid(5, 7, rng, 2.0);
    const double t = rng.uniform();
    const Grid x_t = ot_interpolate(x0, x1, t);
    for (size_t i = 0; i < x_t.v.size(); ++i) {
      const double residual = x_t.v[i] - x0.v[i] - t * (x1.v[i] - x0.v[i]);
      worst = std::max(worst, std::abs(residual));
    }
    const Grid at0 = ot_interpolate(x0, x1, 0.0);
    const Grid at1 = ot_interpolate(x0, x1, 1.0);
    for (size_t i = 0; i < at0.v.size(); ++i) {
      endpoints_exact = endpoints_exact && at0.v[i] == x0.v[i] && at1.v[i] == x1.v[i];
    }
  }
  const bool pass = endpoints_exact && worst < 1e-14;
  return {"ot-interpolation-identities", pass,
          std::string(endpoints_exact ? "endpoints exact" : "endpoint mismatch") +
              ", segment residual " + fmt(worst)};
}

CheckResult check_loss_decomposition(uint64_t seed) {
  RngStream rng(seed, {0x56});
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const Grid x0 = random_grid(6, 6, rng, 2.0);
    const Grid x1 = random_grid(6, 6, rng, 2.0);
    const Grid v = random_grid(6, 6, rng, 2.0);
    const double t = rng.uniform();
    const Grid x_t = ot_interpolate(x0, x1, t);
    std::vector<Mask> anns = {random_mask(6, 6, rng)};
    const double with_zero = sf_loss(v, x0, x1, x_t, t, anns, 0.0);
    double l_fm = 0.0;
    for (size_t i = 0; i < v.v.size(); ++i) {
      const double dvi = v.v[i] - (x1.v[i] - x0.v[i]);
      l_fm += dvi * dvi;
    }
    l_fm /= v.v.size();
    worst = std::max(worst, std::abs(with_zero - l_fm));
  }
  return {"sfloss-alpha-zero-reduction", worst <= 1e-15, "max abs err " + fmt(worst)};
}

double brute_force_best(const std::vector<double>& score, int c, bool maximize) {
  std::vector<int> perm(c);
  std::iota(perm.begin(), perm.end(), 0);
  double best = maximize ? -1e300 : 1e300;
  do {
    double total = 0.0;
    for (int i = 0; i < c; ++i) total += score[static_cast<size_t>(i) * c + perm[i]];
    best = maximize ? std::max(best, total) : std::min(best, total);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

CheckResult check_hungarian_oracle(uint64_t seed) {
  RngStream rng(seed, {0x57});
  double worst = 0.0;
  for (int c = 1; c <= 6; ++c) {
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<double> score(static_cast<size_t>(c) * c);
      for (double& s : score) s = rng.uniform(-5.0, 5.0);
      for (bool maximize : {false, true}) {
        const std::vector<int> perm = hungarian(score, c, maximize);
        double total = 0.0;
        for (int i = 0; i < c; ++i) total += score[static_cast<size_t>(i) * c + perm[i]];
        const double best = brute_force_best(score, c, maximize);
        worst = std::max(worst, std::abs(total - best));
      }
    }
  }
  return {"hungarian-factorial-agreement", worst == 0.0, "max total gap " + fmt(worst)};
}

CheckResult check_metric_fixed_points(uint64_t seed) {
  RngStream rng(seed, {0x58});
  bool ok = true;
  std::string detail = "ok";
  for (int trial = 0; trial < 20 && ok; ++trial) {
    const int count = 1 + static_cast<int>(rng.next_index(5));
    std::vector<Mask> set;
    for (int i = 0; i < count; ++i) set.push_back(random_mask(6, 6, rng));
    if (std::abs(ged(set, set)) > 1e-12) {
      ok = false;
      detail = "GED(S,S) != 0";
    }
    if (std::abs(hm_iou(set, set) - 1.0) > 1e-12) {
      ok = false;
      detail = "HM-IoU(S,S) != 1";
    }
    std::vector<Mask> preds = {random_mask(6, 6, rng)};
    std::vector<Mask> gts = {random_mask(6, 6, rng), random_mask(6, 6, rng)};
    const double before = mdm(preds, gts);
    preds.push_back(random_mask(6, 6, rng));
    if (mdm(preds, gts) + 1e-12 < before) {
      ok = false;
      detail = "MDM decreased when adding a prediction";
    }
  }
  return {"metric-fixed-points", ok, detail};
}

}  // namespace

std::vector<CheckResult> verify_theorems(uint64_t seed, bool break_cholesky) {
  std::vector<CheckResult> results;
  results.push_back(check_alpha_quadrature(seed));
  results.push_back(check_factorization_reconstruction(seed, break_cholesky));
  results.push_back(check_bisection_root(seed));
  results.push_back(check_woodbury(seed));
  return results;
}

std::vector<CheckResult> verify_algebra(uint64_t seed) {
  std::vector<CheckResult> results;
  results.push_back(check_endpoint_identity(seed));
  results.push_back(check_interpolation_linearity(seed));
  results.push_back(check_loss_decomposition(seed));
  results.push_back(check_hungarian_oracle(seed));
  results.push_back(check_metric_fixed_points(seed));
  return results;
}

}  // namespace atfm
