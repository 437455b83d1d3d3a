// atfm/gtr_training.hpp
//
// Stage 1: fits the truncation distribution to the annotation distribution
// with a Monte-Carlo Bernoulli likelihood on reparameterized samples, then
// freezes the parameters.

// Copyright 2026  ATFM authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#ifndef ATFM_GTR_TRAINING_HPP_
#define ATFM_GTR_TRAINING_HPP_

#include <cstdint>
#include <vector>

#include "atfm/grid.hpp"
#include "atfm/lowrank_gaussian.hpp"
#include "atfm/nets.hpp"

namespace atfm {

struct GtrTrainConfig {
  int mc_samples = 20;  // M
  int epochs = 30;
  int batch_size = 1;
  double lr = 1e-4;
  // Train on -log of the Monte-Carlo mixture likelihood instead of the mean
  // negative log-likelihood. The mean-NLL form is convex in the sampled
  // logits, so its optimum is a point mass at the marginal logit map and the
  // fitted covariance collapses; the mixture form keeps annotation modes.
  bool mixture_likelihood = true;
  uint64_t seed = 0;

  void validate() const;
};

struct EpochLog {
  int epoch = 0;
  double mean_loss = 0.0;
  double grad_norm = 0.0;
  double wall_seconds = 0.0;
};

// Mean over M reparameterized draws of the pixel-averaged Bernoulli negative
// log-likelihood of `mask` under the sampled logits. Differentiable through
// mu/factor/diag. Draw i uses stream.derive({i}).
Tensor prior_loss_t(const GtrOutput& out, const Mask& mask, int M, const RngStream& stream);

// Same quantity on a plain distribution (no gradients).
double prior_loss(const LowRankGaussian& dist, const Mask& mask, int M, uint64_t seed);

// Pixel-averaged -log of the M-sample mixture likelihood (log-mean-exp over
// the per-sample log-likelihoods). Same draws as prior_loss_t.
Tensor prior_loss_mixture_t(const GtrOutput& out, const Mask& mask, int M,
                            const RngStream& stream);
double prior_loss_mixture(const LowRankGaussian& dist, const Mask& mask, int M, uint64_t seed);

// One uniformly drawn annotation per step as the likelihood target. Returns
// the trained store flagged frozen. Deterministic under config.seed.
ParameterStore train_gtr(const std::vector<AnnotatedSample>& dataset, const GtrTrainConfig& config,
                         const NetConfig& net, std::vector<EpochLog>* log = nullptr);

}  // namespace atfm

#endif  // ATFM_GTR_TRAINING_HPP_
