// atfm/sfm.hpp
//
// Stage 2: straight-path (optimal transport) flow matching from the frozen
// truncation distribution to the +-c logit encoding of annotations, with a
// per-timestep soft-Dice consistency term against every annotation. Euler
// integration of the learned velocity field turns truncation samples into
// predictions; together with stage 1 this is the full two-stage inference.

// Copyright 2026  ATFM authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#ifndef ATFM_SFM_HPP_
#define ATFM_SFM_HPP_

#include <cstdint>
#include <vector>

#include "atfm/grid.hpp"
#include "atfm/gtr_training.hpp"
#include "atfm/nets.hpp"

namespace atfm {

// A logit map at position t along the flow path.
struct FlowState {
  Grid x;
  double t = 0.0;

  void validate() const {
    ATFM_CHECK(t >= 0.0 && t <= 1.0, "flow state: t outside [0,1]");
    ATFM_CHECK(x.all_finite(), "flow state: logits must be finite");
  }
};

struct SfmTrainConfig {
  double dice_weight = 1e-3;  // alpha
  int epochs = 40;
  int batch_size = 1;
  double lr = 1e-4;
  int euler_steps = 25;   // K
  double grad_stop = 0.0; // delta; <= 0 disables the early stop
  uint64_t seed = 0;

  void validate() const;
};

// +c on foreground, -c on background.
Grid encode_logits(const Mask& mask, double c);

// Elementwise t*x1 + (1-t)*x0.
Grid ot_interpolate(const Grid& x0, const Grid& x1, double t);

// x_t + velocity*(1-t); equals x1 for any t when velocity = x1 - x0.
Grid endpoint_projection(const Grid& x_t, const Grid& velocity, double t);

// (2*sum(sigmoid(l)*m) + eps) / (sum(sigmoid(l)) + sum(m) + eps), eps = 1e-6.
double soft_dice(const Grid& logits, const Mask& mask);
Tensor soft_dice_t(const Tensor& logits, const Mask& mask);

// L_FM (mean squared velocity error against x1 - x0) plus the alpha-weighted
// mean Dice deficit of the projected endpoint against every annotation.
double sf_loss(const Grid& velocity_pred, const Grid& x0, const Grid& x1, const Grid& x_t,
               double t, const std::vector<Mask>& annotations, double alpha);
Tensor sf_loss_t(const Tensor& velocity_pred, const Grid& x0, const Grid& x1, const Grid& x_t,
                 double t, const std::vector<Mask>& annotations, double alpha);

// Trains the velocity field against a frozen stage-1 store. Stops at the
// epoch budget, or earlier when the epoch-mean gradient norm drops below
// grad_stop (if enabled). Deterministic under config.seed.
ParameterStore train_sfm(const std::vector<AnnotatedSample>& dataset, const ParameterStore& gtr,
                         const SfmTrainConfig& config, const NetConfig& net,
                         std::vector<EpochLog>* log = nullptr);

// x <- x + (1/K) * v(x, k/K) for k = 0..K-1.
Grid euler_sample(const ParameterStore& stnet, const Grid& x0, int K);

// Two-stage inference: n truncation draws, each flowed for K steps, then
// sigmoid-thresholded at 0.5. Pass stnet = nullptr for the stage-1-only
// (thresholded truncation sample) output. Draw i uses the stream derived
// from (seed, i), so results are independent of n and evaluation order.
std::vector<Mask> predict(const ParameterStore& gtr, const ParameterStore* stnet,
                          const Grid& image, int n, int K, uint64_t seed);

}  // namespace atfm

#endif  // ATFM_SFM_HPP_
