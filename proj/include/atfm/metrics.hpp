// atfm/metrics.hpp
//
// Multi-annotator segmentation metrics: generalized energy distance under
// d = 1 - IoU, Hungarian-matched IoU on LCM-replicated sets, and maximum
// Dice matching.

// Copyright 2026  ATFM authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#ifndef ATFM_METRICS_HPP_
#define ATFM_METRICS_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "atfm/grid.hpp"

namespace atfm {

// |a ∩ b| / |a ∪ b|; both-empty pairs count as perfect agreement (1.0).
double iou(const Mask& a, const Mask& b);

// 2|a ∩ b| / (|a| + |b|); both-empty -> 1.0.
double dice_hard(const Mask& a, const Mask& b);

// 2 E[d(p,g)] - E[d(p,p')] - E[d(g,g')] with d = 1 - IoU. Expectations are
// means over all ordered pairs, identical-index pairs included.
double ged(const std::vector<Mask>& preds, const std::vector<Mask>& gts);

// Optimal assignment on a square score matrix (Kuhn-Munkres, O(C^3)).
// Returns perm with perm[row] = assigned column; the total is optimal,
// ties broken arbitrarily. score is row-major C x C.
std::vector<int> hungarian(const std::vector<double>& score, int c, bool maximize);

// Mean IoU under the optimal matching after replicating both sets to
// C = lcm(n, m). Throws ValidationError when C exceeds `cap`.
double hm_iou(const std::vector<Mask>& preds, const std::vector<Mask>& gts, int cap = 256);

// (1/m) sum_j max_i Dice(p_i, g_j).
double mdm(const std::vector<Mask>& preds, const std::vector<Mask>& gts);

struct SampleMetrics {
  std::string id;
  double ged = 0.0;
  double hm_iou = 0.0;
  double mdm = 0.0;
};

struct MetricsReport {
  double ged = 0.0;
  double hm_iou = 0.0;
  double mdm = 0.0;
  int n_predictions = 0;
  int n_ground_truths = 0;
  uint64_t seed = 0;
  std::vector<SampleMetrics> per_sample;

  // {"ged_n": ..., "hm_iou_n": ..., "mdm_n": ..., "n": ..., "m": ..., "seed": ...}
  std::string to_json(int indent = -1) const;
};

}  // namespace atfm

#endif  // ATFM_METRICS_HPP_
