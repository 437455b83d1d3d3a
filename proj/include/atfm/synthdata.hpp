// atfm/synthdata.hpp
//
// Deterministic synthetic multi-annotator dataset: randomized blob shapes
// with per-rater systematic boundary bias, shift, and dropout (empty masks),
// mimicking the ambiguity structure of multi-rater lesion data at small
// resolutions. Plus the on-disk dataset format (PGM rasters + JSON manifest).

// Copyright 2026  ATFM authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#ifndef ATFM_SYNTHDATA_HPP_
#define ATFM_SYNTHDATA_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "atfm/grid.hpp"

namespace atfm {

struct SynthConfig {
  int count = 200;
  int size = 32;           // H = W
  int annotators = 4;      // N
  double bias_radius = 1.0;   // per-rater systematic dilate/erode, pixels
  double shift_pixels = 1.0;  // per-rater systematic shift magnitude, pixels
  double empty_prob = 0.25;   // per-rater empty-mask probability
  double blur_width = 1.0;    // Gaussian blur sigma for the image
  double noise_level = 0.05;  // pixel noise sigma
  uint64_t seed = 0;

  void validate() const;
  std::string to_json(int indent = -1) const;
  static SynthConfig from_json_text(const std::string& text);
};

// Pure function of the config; per-sample rng streams make the output
// independent of generation order.
std::vector<AnnotatedSample> generate_dataset(const SynthConfig& config);

// Layout: dir/manifest.json plus one directory per sample holding image.pgm
// and mask_0.pgm .. mask_{N-1}.pgm.
void save_dataset(const std::vector<AnnotatedSample>& samples, const std::string& dir,
                  const SynthConfig& config);
std::vector<AnnotatedSample> load_dataset(const std::string& dir);

}  // namespace atfm

#endif  // ATFM_SYNTHDATA_HPP_
