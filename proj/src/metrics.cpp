// metrics.cpp

// Copyright 2026  ATFM authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#include "atfm/metrics.hpp"

#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

#include "atfm/errors.hpp"

namespace atfm {

namespace {

void count_overlap(const Mask& a, const Mask& b, int* inter, int* a_count, int* b_count) {
  ATFM_CHECK(a.same_shape(b), "metrics: mask shape mismatch");
  int i = 0, ca = 0, cb = 0;
  const int n = a.size();
  for (int k = 0; k < n; ++k) {
    i += a.v[k] & b.v[k];
    ca += a.v[k];
    cb += b.v[k];
  }
  *inter = i;
  *a_count = ca;
  *b_count = cb;
}

std::vector<double> pairwise_distance(const std::vector<Mask>& xs, const std::vector<Mask>& ys) {
  std::vector<double> d(xs.size() * ys.size());
  for (size_t i = 0; i < xs.size(); ++i)
    for (size_t j = 0; j < ys.size(); ++j)
      d[i * ys.size() + j] = 1.0 - iou(xs[i], ys[j]);
  return d;
}

uint64_t lcm_u64(uint64_t a, uint64_t b) { return a / std::gcd(a, b) * b; }

}  // namespace

double iou(const Mask& a, const Mask& b) {
  int inter, ca, cb;
  count_overlap(a, b, &inter, &ca, &cb);
  const int uni = ca + cb - inter;
  if (uni == 0) return 1.0;  // two raters marking nothing agree perfectly
  return static_cast<double>(inter) / uni;
}

double dice_hard(const Mask& a, const Mask& b) {
  int inter, ca, cb;
  count_overlap(a, b, &inter, &ca, &cb);
  if (ca + cb == 0) return 1.0;
  return 2.0 * inter / (ca + cb);
}

double ged(const std::vector<Mask>& preds, const std::vector<Mask>& gts) {
  ATFM_CHECK(!preds.empty() && !gts.empty(), "ged: both mask lists must be non-empty");
  const std::vector<double> cross = pairwise_distance(preds, gts);
  const std::vector<double> within_p = pairwise_distance(preds, preds);
  const std::vector<double> within_g = pairwise_distance(gts, gts);
  const auto mean_of = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / v.size();
  };
  return 2.0 * mean_of(cross) - mean_of(within_p) - mean_of(within_g);
}

std::vector<int> hungarian(const std::vector<double>& score, int c, bool maximize) {
  ATFM_CHECK(c >= 1, "hungarian: matrix must be at least 1x1");
  ATFM_CHECK(static_cast<int>(score.size()) == c * c, "hungarian: matrix not square");

  // Potentials formulation on the min-cost problem; 1-based helpers.
  const double kInf = std::numeric_limits<double>::infinity();
  auto cost = [&](int i, int j) {  // i, j 1-based
    const double v = score[static_cast<size_t>(i - 1) * c + (j - 1)];
    return maximize ? -v : v;
  };
  std::vector<double> u(c + 1, 0.0), v(c + 1, 0.0);
  std::vector<int> p(c + 1, 0), way(c + 1, 0);
  for (int i = 1; i <= c; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(c + 1, kInf);
    std::vector<char> used(c + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      int j1 = 0;
      double delta = kInf;
      for (int j = 1; j <= c; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0, j) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= c; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }

  std::vector<int> perm(c, -1);
  for (int j = 1; j <= c; ++j)
    if (p[j] != 0) perm[p[j] - 1] = j - 1;
  return perm;
}

double hm_iou(const std::vector<Mask>& preds, const std::vector<Mask>& gts, int cap) {
  const int n = static_cast<int>(preds.size());
  const int m = static_cast<int>(gts.size());
  ATFM_CHECK(n >= 1 && m >= 1, "hm_iou: both mask lists must be non-empty");
  const uint64_t c64 = lcm_u64(n, m);
  ATFM_CHECK(c64 <= static_cast<uint64_t>(cap),
             "hm_iou: lcm(" + std::to_string(n) + "," + std::to_string(m) + ") = " +
                 std::to_string(c64) + " exceeds cap " + std::to_string(cap));
  const int c = static_cast<int>(c64);
  const int rep_p = c / n, rep_g = c / m;

  // Base n x m IoU matrix, then index-replicated to C x C.
  std::vector<double> base(static_cast<size_t>(n) * m);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) base[static_cast<size_t>(i) * m + j] = iou(preds[i], gts[j]);

  std::vector<double> score(static_cast<size_t>(c) * c);
  for (int i = 0; i < c; ++i)
    for (int j = 0; j < c; ++j)
      score[static_cast<size_t>(i) * c + j] = base[static_cast<size_t>(i / rep_p) * m + (j / rep_g)];

  const std::vector<int> perm = hungarian(score, c, /*maximize=*/true);
  double total = 0.0;
  for (int i = 0; i < c; ++i) total += score[static_cast<size_t>(i) * c + perm[i]];
  return total / c;
}

double mdm(const std::vector<Mask>& preds, const std::vector<Mask>& gts) {
  ATFM_CHECK(!preds.empty() && !gts.empty(), "mdm: both mask lists must be non-empty");
  double total = 0.0;
  for (const Mask& g : gts) {
    double best = 0.0;
    for (const Mask& p : preds) best = std::max(best, dice_hard(p, g));
    total += best;
  }
  return total / gts.size();
}

std::string MetricsReport::to_json(int indent) const {
  nlohmann::json j;
  j["ged_n"] = ged;
  j["hm_iou_n"] = hm_iou;
  j["mdm_n"] = mdm;
  j["n"] = n_predictions;
  j["m"] = n_ground_truths;
  j["seed"] = seed;
  nlohmann::json breakdown = nlohmann::json::array();
  for (const SampleMetrics& s : per_sample) {
    breakdown.push_back({{"id", s.id}, {"ged", s.ged}, {"hm_iou", s.hm_iou}, {"mdm", s.mdm}});
  }
  j["per_sample"] = breakdown;
  return j.dump(indent);
}

}  // namespace atfm
