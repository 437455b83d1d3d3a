// sfm.cpp

// Copyright 2026  ATFM authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#include "atfm/sfm.hpp"

#include <chrono>
#include <cmath>
#include <optional>

#include "atfm/errors.hpp"

namespace atfm {

void SfmTrainConfig::validate() const {
  ATFM_CHECK(dice_weight >= 0.0, "sfm train: alpha must be >= 0");
  ATFM_CHECK(epochs >= 1, "sfm train: epochs must be >= 1");
  ATFM_CHECK(batch_size >= 1, "sfm train: batch size must be >= 1");
  ATFM_CHECK(lr > 0.0, "sfm train: learning rate must be > 0");
  ATFM_CHECK(euler_steps >= 1, "sfm train: K must be >= 1");
}

Grid encode_logits(const Mask& mask, double c) {
  ATFM_CHECK(c > 0.0, "encode_logits: c must be > 0");
  Grid g(mask.h, mask.w);
  for (int i = 0; i < mask.size(); ++i) g.v[i] = c * (2.0 * mask.v[i] - 1.0);
  return g;
}

Grid ot_interpolate(const Grid& x0, const Grid& x1, double t) {
  ATFM_CHECK(x0.same_shape(x1), "ot_interpolate: shape mismatch");
  ATFM_CHECK(t >= 0.0 && t <= 1.0, "ot_interpolate: t outside [0,1]");
  Grid g(x0.h, x0.w);
  for (size_t i = 0; i < g.v.size(); ++i) g.v[i] = t * x1.v[i] + (1.0 - t) * x0.v[i];
  return g;
}

Grid endpoint_projection(const Grid& x_t, const Grid& velocity, double t) {
  ATFM_CHECK(x_t.same_shape(velocity), "endpoint_projection: shape mismatch");
  ATFM_CHECK(t >= 0.0 && t <= 1.0, "endpoint_projection: t outside [0,1]");
  Grid g(x_t.h, x_t.w);
  for (size_t i = 0; i < g.v.size(); ++i) g.v[i] = x_t.v[i] + velocity.v[i] * (1.0 - t);
  return g;
}

Tensor soft_dice_t(const Tensor& logits, const Mask& mask) {
  constexpr double kEps = 1e-6;
  const int d = logits.numel();
  ATFM_CHECK(mask.size() == d, "soft_dice: shape mismatch");
  std::vector<double> m(d);
  double mask_sum = 0.0;
  for (int i = 0; i < d; ++i) {
    m[i] = mask.v[i];
    mask_sum += m[i];
  }
  Tensor p = sigmoid(logits);
  Tensor inter = sum(mul(p, Tensor::leaf({d}, std::move(m))));
  Tensor num = affine(inter, 2.0, kEps);
  Tensor den = affine(sum(p), 1.0, mask_sum + kEps);
  return div_s(num, den);
}

double soft_dice(const Grid& logits, const Mask& mask) {
  Tensor l = Tensor::leaf({logits.size()}, logits.v);
  return soft_dice_t(l, mask).scalar();
}

Tensor sf_loss_t(const Tensor& velocity_pred, const Grid& x0, const Grid& x1, const Grid& x_t,
                 double t, const std::vector<Mask>& annotations, double alpha) {
  ATFM_CHECK(!annotations.empty(), "sf_loss: needs at least one annotation");
  ATFM_CHECK(alpha >= 0.0, "sf_loss: alpha must be >= 0");
  ATFM_CHECK(t >= 0.0 && t <= 1.0, "sf_loss: t outside [0,1]");
  const int d = velocity_pred.numel();
  ATFM_CHECK(x0.size() == d && x1.size() == d && x_t.size() == d, "sf_loss: shape mismatch");

  Tensor v = velocity_pred.shape().size() == 1 ? velocity_pred : reshape(velocity_pred, {d});
  std::vector<double> direction(d);
  for (int i = 0; i < d; ++i) direction[i] = x1.v[i] - x0.v[i];
  Tensor l_fm = mse(v, Tensor::leaf({d}, std::move(direction)));
  if (alpha == 0.0) return l_fm;

  Tensor x1t = add(Tensor::leaf({d}, x_t.v), affine(v, 1.0 - t, 0.0));
  Tensor dice_deficit;
  for (const Mask& y : annotations) {
    Tensor deficit = affine(soft_dice_t(x1t, y), -1.0, 1.0);  // 1 - dice
    dice_deficit = dice_deficit.defined() ? add(dice_deficit, deficit) : deficit;
  }
  return add(l_fm, affine(dice_deficit, alpha / annotations.size(), 0.0));
}

double sf_loss(const Grid& velocity_pred, const Grid& x0, const Grid& x1, const Grid& x_t,
               double t, const std::vector<Mask>& annotations, double alpha) {
  Tensor v = Tensor::leaf({velocity_pred.size()}, velocity_pred.v);
  return sf_loss_t(v, x0, x1, x_t, t, annotations, alpha).scalar();
}

ParameterStore train_sfm(const std::vector<AnnotatedSample>& dataset, const ParameterStore& gtr,
                         const SfmTrainConfig& config, const NetConfig& net,
                         std::vector<EpochLog>* log) {
  config.validate();
  net.validate();
  ATFM_CHECK(!dataset.empty(), "train_sfm: dataset is empty");
  ATFM_CHECK(gtr.frozen(), "train_sfm: stage-1 store must be frozen");
  ATFM_CHECK(gtr.config().image_size == net.image_size,
             "train_sfm: stage-1 checkpoint image size does not match");
  for (const AnnotatedSample& s : dataset)
    ATFM_CHECK(s.image.h == net.image_size && s.image.w == net.image_size,
               "train_sfm: sample '" + s.id + "' does not match the configured image size");

  ParameterStore params = init_stnet_params(net, config.seed);
  Adam opt(&params, AdamConfig{config.lr});
  const int n = static_cast<int>(dataset.size());
  const int h = net.image_size, w = net.image_size;
  const int d = h * w;

  // The stage-1 store is frozen, so its per-image distribution never changes;
  // memoize it instead of re-running the backbone every step.
  std::vector<std::optional<LowRankGaussian>> dist_cache(n);
  const auto distribution_for = [&](int idx) -> const LowRankGaussian& {
    if (!dist_cache[idx]) dist_cache[idx] = gtr_distribution(gtr, dataset[idx].image);
    return *dist_cache[idx];
  };

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    RngStream shuffle_rng(config.seed, {0xE1, static_cast<uint64_t>(epoch)});
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
        const int idx = order[start + b];
        const AnnotatedSample& sample = dataset[idx];
        RngStream step_rng(config.seed,
                           {0xB0, static_cast<uint64_t>(epoch), static_cast<uint64_t>(start + b)});

        const LowRankGaussian& dist = distribution_for(idx);
        const Eigen::VectorXd z0 = sample_one(dist, step_rng);
        Grid x0(h, w);
        for (int i = 0; i < d; ++i) x0.v[i] = z0[i];

        const size_t ann = step_rng.next_index(sample.masks.size());
        const Grid x1 = encode_logits(sample.masks[ann], net.logit_c);
        const double t = step_rng.uniform();
        const Grid x_t = ot_interpolate(x0, x1, t);

        Tensor input = Tensor::leaf({1, h, w}, x_t.v);
        Tensor velocity = stnet_forward(params, input, t);
        Tensor item =
            sf_loss_t(velocity, x0, x1, x_t, t, sample.masks, config.dice_weight);
        batch_loss = batch_loss.defined() ? add(batch_loss, item) : item;
      }
      if (bsz > 1) batch_loss = affine(batch_loss, 1.0 / bsz, 0.0);
      const double loss_value = batch_loss.scalar();
      if (!std::isfinite(loss_value))
        throw NumericalError("train_sfm: non-finite loss at epoch " + std::to_string(epoch));
      backward(batch_loss);
      grad_sum += gradient_norm(params);
      opt.step();
      loss_sum += loss_value;
      ++steps;
    }

    const double mean_grad = grad_sum / steps;
    if (log) {
      const double wall =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      log->push_back({epoch, loss_sum / steps, mean_grad, wall});
    }
    if (config.grad_stop > 0.0 && mean_grad < config.grad_stop) break;
  }

  params.freeze();
  return params;
}

Grid euler_sample(const ParameterStore& stnet, const Grid& x0, int K) {
  ATFM_CHECK(K >= 1, "euler_sample: K must be >= 1");
  Grid x = x0;
  const double dt = 1.0 / K;
  for (int k = 0; k < K; ++k) {
    const Grid v = stnet_velocity(stnet, x, static_cast<double>(k) / K);
    for (size_t i = 0; i < x.v.size(); ++i) x.v[i] += dt * v.v[i];
  }
  return x;
}

std::vector<Mask> predict(const ParameterStore& gtr, const ParameterStore* stnet,
                          const Grid& image, int n, int K, uint64_t seed) {
  ATFM_CHECK(n >= 1, "predict: n must be >= 1");
  if (stnet)
    ATFM_CHECK(stnet->config().image_size == gtr.config().image_size,
               "predict: checkpoint image sizes do not match");
  const LowRankGaussian dist = gtr_distribution(gtr, image);
  const int h = image.h, w = image.w;

  std::vector<Mask> masks;
  masks.reserve(n);
  RngStream master(seed);
  for (int i = 0; i < n; ++i) {
    RngStream stream = master.derive({static_cast<uint64_t>(i)});
    const Eigen::VectorXd z = sample_one(dist, stream);
    Grid x(h, w);
    for (int p = 0; p < h * w; ++p) x.v[p] = z[p];
    if (stnet) x = euler_sample(*stnet, x, K);
    masks.push_back(threshold_logits(x));
  }
  return masks;
}

}  // namespace atfm
