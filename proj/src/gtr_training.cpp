// gtr_training.cpp

// Copyright 2026  ATFM authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#include "atfm/gtr_training.hpp"

#include <chrono>
#include <cmath>

#include "atfm/errors.hpp"

namespace atfm {

void GtrTrainConfig::validate() const {
  ATFM_CHECK(mc_samples >= 1, "gtr train: M must be >= 1");
  ATFM_CHECK(epochs >= 1, "gtr train: epochs must be >= 1");
  ATFM_CHECK(batch_size >= 1, "gtr train: batch size must be >= 1");
  ATFM_CHECK(lr > 0.0, "gtr train: learning rate must be > 0");
}

namespace {

// One pixel-averaged Bernoulli NLL per reparameterized draw.
std::vector<Tensor> per_sample_nll(const GtrOutput& out, const Mask& mask, int M,
                                   const RngStream& stream) {
  ATFM_CHECK(M >= 1, "prior_loss: M must be >= 1");
  const int d = out.mu.numel();
  ATFM_CHECK(mask.size() == d, "prior_loss: mask shape does not match distribution");
  const int rank = out.factor.shape()[0];
  std::vector<double> targets(d);
  for (int i = 0; i < d; ++i) targets[i] = mask.v[i];

  std::vector<Tensor> nlls;
  nlls.reserve(M);
  for (int m = 0; m < M; ++m) {
    RngStream s = stream.derive({static_cast<uint64_t>(m)});
    std::vector<double> eps_r(rank), eps_d(d);
    for (int j = 0; j < rank; ++j) eps_r[j] = s.normal();
    for (int i = 0; i < d; ++i) eps_d[i] = s.normal();
    Tensor z = lowrank_sample(out.mu, out.factor, out.diag, eps_r, eps_d);
    nlls.push_back(bernoulli_nll_mean(z, targets));
  }
  return nlls;
}

GtrOutput as_leaves(const LowRankGaussian& dist) {
  const int d = dist.dim();
  std::vector<double> mu(d), diag(d);
  std::vector<double> factor(static_cast<size_t>(dist.rank) * d);
  for (int i = 0; i < d; ++i) {
    mu[i] = dist.mu[i];
    diag[i] = dist.diag[i];
  }
  for (int j = 0; j < dist.rank; ++j)
    for (int i = 0; i < d; ++i) factor[static_cast<size_t>(j) * d + i] = dist.factor(i, j);
  GtrOutput out;
  out.mu = Tensor::leaf({d}, std::move(mu));
  out.factor = Tensor::leaf({dist.rank, d}, std::move(factor));
  out.diag = Tensor::leaf({d}, std::move(diag));
  return out;
}

}  // namespace

Tensor prior_loss_t(const GtrOutput& out, const Mask& mask, int M, const RngStream& stream) {
  const std::vector<Tensor> nlls = per_sample_nll(out, mask, M, stream);
  Tensor acc;
  for (const Tensor& nll : nlls) acc = acc.defined() ? add(acc, nll) : nll;
  return affine(acc, 1.0 / M, 0.0);
}

double prior_loss(const LowRankGaussian& dist, const Mask& mask, int M, uint64_t seed) {
  RngStream stream(seed);
  return prior_loss_t(as_leaves(dist), mask, M, stream).scalar();
}

Tensor prior_loss_mixture_t(const GtrOutput& out, const Mask& mask, int M,
                            const RngStream& stream) {
  return mixture_nll(per_sample_nll(out, mask, M, stream), out.mu.numel());
}

double prior_loss_mixture(const LowRankGaussian& dist, const Mask& mask, int M, uint64_t seed) {
  RngStream stream(seed);
  return prior_loss_mixture_t(as_leaves(dist), mask, M, stream).scalar();
}

ParameterStore train_gtr(const std::vector<AnnotatedSample>& dataset, const GtrTrainConfig& config,
                         const NetConfig& net, std::vector<EpochLog>* log) {
  config.validate();
  net.validate();
  ATFM_CHECK(!dataset.empty(), "train_gtr: dataset is empty");
  for (const AnnotatedSample& s : dataset)
    ATFM_CHECK(s.image.h == net.image_size && s.image.w == net.image_size,
               "train_gtr: sample '" + s.id + "' does not match the configured image size");

  ParameterStore params = init_gtr_params(net, config.seed);
  Adam opt(&params, AdamConfig{config.lr});
  const int n = static_cast<int>(dataset.size());

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    // Deterministic shuffle per epoch.
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    RngStream shuffle_rng(config.seed, {0xE0, static_cast<uint64_t>(epoch)});
    for (int i = n - 1; i > 0; --i) {
      const int j = static_cast<int>(shuffle_rng.next_index(i + 1));
      std::swap(order[i], order[j]);
    }

    double loss_sum = 0.0;
    double grad_sum = 0.0;
    int steps = 0;
    for (int start = 0; start < n; start += config.batch_size) {
      const int bsz = std::min(config.batch_size, n - start);
      Tensor batch_loss;
      for (int b = 0; b < bsz; ++b) {
        const AnnotatedSample& sample = dataset[order[start + b]];
        RngStream step_rng(config.seed,
                           {0xA0, static_cast<uint64_t>(epoch), static_cast<uint64_t>(start + b)});
        const size_t ann = step_rng.next_index(sample.masks.size());
        GtrOutput out = gtr_forward(params, sample.image);
        Tensor item =
            config.mixture_likelihood
                ? prior_loss_mixture_t(out, sample.masks[ann], config.mc_samples, step_rng)
                : prior_loss_t(out, sample.masks[ann], config.mc_samples, step_rng);
        batch_loss = batch_loss.defined() ? add(batch_loss, item) : item;
      }
      if (bsz > 1) batch_loss = affine(batch_loss, 1.0 / bsz, 0.0);
      const double loss_value = batch_loss.scalar();
      if (!std::isfinite(loss_value))
        throw NumericalError("train_gtr: non-finite loss at epoch " + std::to_string(epoch));
      backward(batch_loss);
      grad_sum += gradient_norm(params);
      opt.step();
      loss_sum += loss_value;
      ++steps;
    }

    if (log) {
      const double wall =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      log->push_back({epoch, loss_sum / steps, grad_sum / steps, wall});
    }
  }

  params.freeze();
  return params;
}

}  // namespace atfm
