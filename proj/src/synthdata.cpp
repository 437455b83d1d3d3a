// synthdata.cpp

// Copyright 2026  ATFM authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#include "atfm/synthdata.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "atfm/errors.hpp"
#include "atfm/pgm.hpp"
#include "atfm/rng.hpp"

namespace fs = std::filesystem;

namespace atfm {

namespace {

// Blob geometry for one sample: rotated ellipse with low-order harmonic
// boundary wobble. Membership is analytic, so rater bias and shift are just
// parameter changes instead of discrete morphology.
struct Blob {
  double cx, cy;        // center, pixels
  double a, b;          // radii, pixels
  double rot;           // rotation, radians
  double amp[3];        // harmonics k = 2,3,4
  double phase[3];

  bool contains(double x, double y, double delta_px, double dx, double dy) const {
    const double tx = x - cx - dx;
    const double ty = y - cy - dy;
    const double c = std::cos(rot), s = std::sin(rot);
    const double xr = c * tx + s * ty;
    const double yr = -s * tx + c * ty;
    const double u = xr / a, v = yr / b;
    const double rho = std::sqrt(u * u + v * v);
    const double theta = std::atan2(v, u);
    double boundary = 1.0;
    for (int k = 0; k < 3; ++k) boundary += amp[k] * std::cos((k + 2) * theta + phase[k]);
    const double delta_norm = delta_px / std::sqrt(a * b);
    return rho <= boundary + delta_norm;
  }
};

Blob draw_blob(int size, RngStream& rng) {
  Blob blob;
  blob.cx = 0.5 * size + rng.uniform(-0.08, 0.08) * size;
  blob.cy = 0.5 * size + rng.uniform(-0.08, 0.08) * size;
  blob.a = rng.uniform(0.16, 0.30) * size;
  blob.b = rng.uniform(0.16, 0.30) * size;
  blob.rot = rng.uniform(0.0, M_PI);
  for (int k = 0; k < 3; ++k) {
    blob.amp[k] = rng.uniform(0.0, 0.08);
    blob.phase[k] = rng.uniform(0.0, 2.0 * M_PI);
  }
  return blob;
}

Mask rasterize(const Blob& blob, int size, double delta_px, double dx, double dy) {
  Mask m(size, size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      m.at(y, x) = blob.contains(x + 0.5, y + 0.5, delta_px, dx, dy) ? 1 : 0;
  return m;
}

Grid gaussian_blur(const Grid& in, double sigma) {
  if (sigma <= 0.0) return in;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(2 * radius + 1);
  double norm = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    norm += kernel[i + radius];
  }
  for (double& k : kernel) k /= norm;

  Grid tmp(in.h, in.w), out(in.h, in.w);
  for (int y = 0; y < in.h; ++y)
    for (int x = 0; x < in.w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        const int xi = std::clamp(x + i, 0, in.w - 1);
        acc += kernel[i + radius] * in.at(y, xi);
      }
      tmp.at(y, x) = acc;
    }
  for (int y = 0; y < in.h; ++y)
    for (int x = 0; x < in.w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        const int yi = std::clamp(y + i, 0, in.h - 1);
        acc += kernel[i + radius] * tmp.at(yi, x);
      }
      out.at(y, x) = acc;
    }
  return out;
}

std::string sample_id(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "sample_%04d", index);
  return buf;
}

nlohmann::json config_to_json(const SynthConfig& c) {
  return {{"count", c.count},           {"size", c.size},
          {"annotators", c.annotators}, {"bias_radius", c.bias_radius},
          {"shift_pixels", c.shift_pixels}, {"empty_prob", c.empty_prob},
          {"blur_width", c.blur_width}, {"noise_level", c.noise_level},
          {"seed", c.seed}};
}

}  // namespace

void SynthConfig::validate() const {
  ATFM_CHECK(count >= 1, "synth: count must be >= 1");
  ATFM_CHECK(size >= 8, "synth: size must be >= 8");
  ATFM_CHECK(annotators >= 1, "synth: annotators must be >= 1");
  ATFM_CHECK(empty_prob >= 0.0 && empty_prob <= 1.0, "synth: empty_prob must be in [0,1]");
  ATFM_CHECK(bias_radius >= 0.0, "synth: bias_radius must be >= 0");
  ATFM_CHECK(shift_pixels >= 0.0, "synth: shift_pixels must be >= 0");
  ATFM_CHECK(blur_width >= 0.0, "synth: blur_width must be >= 0");
  ATFM_CHECK(noise_level >= 0.0, "synth: noise_level must be >= 0");
  ATFM_CHECK(bias_radius + shift_pixels <= size / 4.0,
             "synth: rater bias too large for image size (region would leave the image)");
}

std::string SynthConfig::to_json(int indent) const { return config_to_json(*this).dump(indent); }

SynthConfig SynthConfig::from_json_text(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) throw ValidationError("synth config: invalid JSON");
  SynthConfig c;
  const nlohmann::json known = config_to_json(c);
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw ValidationError("synth config: unknown key '" + key + "'");
    (void)value;
  }
  c.count = j.value("count", c.count);
  c.size = j.value("size", c.size);
  c.annotators = j.value("annotators", c.annotators);
  c.bias_radius = j.value("bias_radius", c.bias_radius);
  c.shift_pixels = j.value("shift_pixels", c.shift_pixels);
  c.empty_prob = j.value("empty_prob", c.empty_prob);
  c.blur_width = j.value("blur_width", c.blur_width);
  c.noise_level = j.value("noise_level", c.noise_level);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

std::vector<AnnotatedSample> generate_dataset(const SynthConfig& config) {
  config.validate();
  std::vector<AnnotatedSample> samples(config.count);
  const int n = config.annotators;
  for (int i = 0; i < config.count; ++i) {
    RngStream rng(config.seed, {1, static_cast<uint64_t>(i)});
    const Blob blob = draw_blob(config.size, rng);

    AnnotatedSample& sample = samples[i];
    sample.id = sample_id(i);
    sample.masks.reserve(n);
    const Mask base = rasterize(blob, config.size, 0.0, 0.0, 0.0);

    for (int k = 0; k < n; ++k) {
      // Fixed draw order per rater regardless of the empty decision, so
      // the stream stays aligned.
      const bool empty = rng.uniform() < config.empty_prob;
      const double systematic = n > 1 ? 2.0 * k / (n - 1) - 1.0 : 0.0;
      const double delta = config.bias_radius * systematic +
                           rng.uniform(-0.25, 0.25) * config.bias_radius;
      const double angle = 2.0 * M_PI * k / n;
      const double dx = config.shift_pixels * (std::cos(angle) + rng.uniform(-0.3, 0.3));
      const double dy = config.shift_pixels * (std::sin(angle) + rng.uniform(-0.3, 0.3));
      if (empty) {
        sample.masks.emplace_back(config.size, config.size, 0);
      } else {
        sample.masks.push_back(rasterize(blob, config.size, delta, dx, dy));
      }
    }

    Grid base_grid(config.size, config.size);
    for (int p = 0; p < base.size(); ++p) base_grid.v[p] = base.v[p];
    Grid image = gaussian_blur(base_grid, config.blur_width);
    for (double& v : image.v) {
      v = 0.15 + 0.7 * v + config.noise_level * rng.normal();
      v = std::clamp(v, 0.0, 1.0);
    }
    sample.image = std::move(image);
    sample.validate();
  }
  return samples;
}

void save_dataset(const std::vector<AnnotatedSample>& samples, const std::string& dir,
                  const SynthConfig& config) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("save_dataset: cannot create directory: " + dir);

  nlohmann::json manifest;
  manifest["format"] = "atfm-dataset";
  manifest["version"] = 1;
  manifest["count"] = samples.size();
  manifest["size"] = config.size;
  manifest["n_raters"] = config.annotators;
  manifest["seed"] = config.seed;
  manifest["config"] = config_to_json(config);
  nlohmann::json list = nlohmann::json::array();

  for (const AnnotatedSample& sample : samples) {
    const fs::path sdir = fs::path(dir) / sample.id;
    fs::create_directories(sdir, ec);
    if (ec) throw IoError("save_dataset: cannot create directory: " + sdir.string());
    write_pgm((sdir / "image.pgm").string(), sample.image);
    for (size_t k = 0; k < sample.masks.size(); ++k)
      write_pgm((sdir / ("mask_" + std::to_string(k) + ".pgm")).string(), sample.masks[k]);
    list.push_back({{"id", sample.id}, {"n_masks", sample.masks.size()}});
  }
  manifest["samples"] = list;

  std::ofstream out(fs::path(dir) / "manifest.json");
  if (!out) throw IoError("save_dataset: cannot write manifest in " + dir);
  out << manifest.dump(2) << "\n";
}

std::vector<AnnotatedSample> load_dataset(const std::string& dir) {
  const fs::path manifest_path = fs::path(dir) / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw IoError("load_dataset: missing manifest: " + manifest_path.string());
  nlohmann::json manifest = nlohmann::json::parse(in, nullptr, /*allow_exceptions=*/false);
  if (manifest.is_discarded())
    throw IoError("load_dataset: malformed manifest: " + manifest_path.string());
  if (manifest.value("format", "") != "atfm-dataset")
    throw IoError("load_dataset: not a dataset manifest: " + manifest_path.string());
  const int size = manifest.value("size", 0);
  if (size < 8) throw IoError("load_dataset: bad size in manifest: " + manifest_path.string());

  std::vector<AnnotatedSample> samples;
  for (const auto& entry : manifest.at("samples")) {
    AnnotatedSample sample;
    sample.id = entry.value("id", "");
    const int n_masks = entry.value("n_masks", 0);
    const fs::path sdir = fs::path(dir) / sample.id;
    if (!fs::exists(sdir))
      throw IoError("load_dataset: manifest lists missing sample: " + sdir.string());
    const fs::path image_path = sdir / "image.pgm";
    if (!fs::exists(image_path))
      throw IoError("load_dataset: missing image: " + image_path.string());
    sample.image = read_pgm_grid(image_path.string());
    if (sample.image.h != size || sample.image.w != size)
      throw IoError("load_dataset: image shape mismatch: " + image_path.string());
    for (int k = 0; k < n_masks; ++k) {
      const fs::path mask_path = sdir / ("mask_" + std::to_string(k) + ".pgm");
      if (!fs::exists(mask_path))
        throw IoError("load_dataset: missing mask: " + mask_path.string());
      Mask m = read_pgm_mask(mask_path.string());
      if (m.h != size || m.w != size)
        throw IoError("load_dataset: mask shape mismatch: " + mask_path.string());
      sample.masks.push_back(std::move(m));
    }
    sample.validate();
    samples.push_back(std::move(sample));
  }
  const size_t expected = manifest.value("count", samples.size());
  if (expected != samples.size())
    throw IoError("load_dataset: manifest count does not match sample list: " +
                  manifest_path.string());
  return samples;
}

}  // namespace atfm
