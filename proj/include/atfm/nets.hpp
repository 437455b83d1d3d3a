// atfm/nets.hpp
//
// The two small conv nets: the truncation-distribution backbone with
// mean/factor/diagonal heads, and the time-conditioned velocity field.
// Parameters live in a named, ordered ParameterStore with a binary
// checkpoint format; gradients flow through the tensor engine and are
// validated against central finite differences by grad_check.

// Copyright 2026  ATFM authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#ifndef ATFM_NETS_HPP_
#define ATFM_NETS_HPP_

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "atfm/grid.hpp"
#include "atfm/lowrank_gaussian.hpp"
#include "atfm/tensor.hpp"

namespace atfm {

struct NetConfig {
  int image_size = 32;                    // H = W
  std::vector<int> widths = {16, 32, 64}; // channels per resolution level
  int rank = 10;                          // r of the low-rank factor
  int time_dim = 32;                      // sinusoidal embedding width
  double logit_c = 4.0;                   // +-c mask logit encoding

  int levels() const { return static_cast<int>(widths.size()); }
  void validate() const;
  std::string to_json(int indent = -1) const;
  static NetConfig from_json_text(const std::string& text);
  uint64_t hash() const;
};

class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(std::string kind, NetConfig config, uint64_t seed)
      : kind_(std::move(kind)), config_(std::move(config)), seed_(seed) {}

  // Registers a new leaf parameter; names must be unique, shape immutable.
  Tensor create(const std::string& name, std::vector<int> shape, std::vector<double> values);
  Tensor get(const std::string& name) const;
  bool has(const std::string& name) const;

  const std::vector<std::string>& names() const { return names_; }
  int64_t param_count() const;

  const std::string& kind() const { return kind_; }
  const NetConfig& config() const { return config_; }
  uint64_t seed() const { return seed_; }
  int64_t step() const { return step_; }
  void set_step(int64_t s) { step_ = s; }

  bool frozen() const { return frozen_; }
  void freeze();  // also drops requires_grad on every leaf

  // Throws NumericalError if any parameter is non-finite.
  void check_finite() const;

  void save(const std::string& path) const;
  static ParameterStore load(const std::string& path);

  // FNV-1a over the serialized f32 payload; cheap identity check in tests.
  uint64_t content_hash() const;

 private:
  std::string kind_;
  NetConfig config_;
  uint64_t seed_ = 0;
  int64_t step_ = 0;
  bool frozen_ = false;
  std::vector<std::string> names_;
  std::vector<Tensor> tensors_;

  int find(const std::string& name) const;
};

// Sinusoidal embedding of t in [0,1]; first half sines, second half cosines.
std::vector<double> time_embedding(double t, int dim);

// Deterministic parameter initialization.
ParameterStore init_gtr_params(const NetConfig& config, uint64_t seed);
ParameterStore init_stnet_params(const NetConfig& config, uint64_t seed);

struct GtrOutput {
  Tensor mu;      // {d}
  Tensor factor;  // {r, d}; row j is column j of the d x r factor
  Tensor diag;    // {d}, softplus-transformed with the 1e-5 floor applied

  LowRankGaussian snapshot() const;
};

// Backbone + 1x1 heads; image shape must match the store's config.
GtrOutput gtr_forward(const ParameterStore& params, const Grid& image);
// Convenience: forward and snapshot into a plain distribution.
LowRankGaussian gtr_distribution(const ParameterStore& params, const Grid& image);

// Velocity field g(x_t, t); x_t is {1,H,W} or {H,W}, t in [0,1].
Tensor stnet_forward(const ParameterStore& params, const Tensor& x_t, double t);
Grid stnet_velocity(const ParameterStore& params, const Grid& x_t, double t);

// Compares analytic gradients against central finite differences on `probes`
// randomly chosen scalar parameters. The evaluator must be deterministic and
// build a fresh graph over the store's leaves on each call.
double grad_check(const std::function<Tensor()>& loss_fn, ParameterStore& params, int probes,
                  double eps, uint64_t seed);

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(ParameterStore* store, AdamConfig config);
  // Applies one update from the gradients currently on the leaves.
  // Throws ValidationError if the store is frozen.
  void step();

 private:
  ParameterStore* store_;
  AdamConfig config_;
  int64_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// sqrt(sum of squared gradients) over all parameters; empty grads count as 0.
double gradient_norm(const ParameterStore& store);

}  // namespace atfm

#endif  // ATFM_NETS_HPP_
