// atfm/grid.hpp

// Copyright 2026  ATFM authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#ifndef ATFM_GRID_HPP_
#define ATFM_GRID_HPP_

#include <cmath>
#include <string>
#include <vector>

#include "atfm/errors.hpp"

namespace atfm {

// Row-major H x W map of doubles. Images live in [0,1], logit maps in R.
struct Grid {
  int h = 0;
  int w = 0;
  std::vector<double> v;

  Grid() = default;
  Grid(int h_, int w_, double fill = 0.0) : h(h_), w(w_), v(static_cast<size_t>(h_) * w_, fill) {}

  double& at(int y, int x) { return v[static_cast<size_t>(y) * w + x]; }
  double at(int y, int x) const { return v[static_cast<size_t>(y) * w + x]; }
  int size() const { return h * w; }

  bool same_shape(const Grid& o) const { return h == o.h && w == o.w; }

  bool all_finite() const {
    for (double x : v)
      if (!std::isfinite(x)) return false;
    return true;
  }
};

// Binary H x W mask, values 0/1.
struct Mask {
  int h = 0;
  int w = 0;
  std::vector<uint8_t> v;

  Mask() = default;
  Mask(int h_, int w_, uint8_t fill = 0) : h(h_), w(w_), v(static_cast<size_t>(h_) * w_, fill) {}

  uint8_t& at(int y, int x) { return v[static_cast<size_t>(y) * w + x]; }
  uint8_t at(int y, int x) const { return v[static_cast<size_t>(y) * w + x]; }
  int size() const { return h * w; }

  bool same_shape(const Mask& o) const { return h == o.h && w == o.w; }
  bool empty_mask() const {
    for (uint8_t b : v)
      if (b) return false;
    return true;
  }
  int count() const {
    int c = 0;
    for (uint8_t b : v) c += b;
    return c;
  }

  bool operator==(const Mask& o) const { return h == o.h && w == o.w && v == o.v; }
};

// One image with its N rater annotations.
struct AnnotatedSample {
  Grid image;              // values in [0,1]
  std::vector<Mask> masks; // N >= 1, all image-shaped
  std::string id;

  void validate() const {
    ATFM_CHECK(!masks.empty(), "sample '" + id + "': needs at least one mask");
    for (const Mask& m : masks) {
      ATFM_CHECK(m.h == image.h && m.w == image.w,
                 "sample '" + id + "': mask shape differs from image");
      for (uint8_t b : m.v)
        ATFM_CHECK(b == 0 || b == 1, "sample '" + id + "': mask value not in {0,1}");
    }
    for (double x : image.v)
      ATFM_CHECK(x >= 0.0 && x <= 1.0, "sample '" + id + "': image value outside [0,1]");
  }
};

inline Mask threshold_logits(const Grid& logits) {
  // sigmoid(x) > 0.5  <=>  x > 0
  Mask m(logits.h, logits.w);
  for (int i = 0; i < logits.size(); ++i) m.v[i] = logits.v[i] > 0.0 ? 1 : 0;
  return m;
}

}  // namespace atfm

#endif  // ATFM_GRID_HPP_
