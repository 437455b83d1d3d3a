// atfm/tensor.hpp
//
// Minimal reverse-mode automatic differentiation over dense double tensors.
// Just enough ops for the small conv nets and losses in this project: graphs
// are built per forward pass over long-lived leaf (parameter) tensors and torn
// down after backward(). When no input requires a gradient the ops skip
// closure creation, so the same code path serves inference.

// Copyright 2026  ATFM authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#ifndef ATFM_TENSOR_HPP_
#define ATFM_TENSOR_HPP_

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace atfm {

struct TensorNode;
using TensorNodePtr = std::shared_ptr<TensorNode>;

struct TensorNode {
  std::vector<int> shape;
  std::vector<double> value;
  std::vector<double> grad;  // allocated on demand, numel-sized
  bool requires_grad = false;
  std::vector<TensorNodePtr> parents;
  std::function<void(TensorNode&)> backward_fn;  // scatter node.grad to parents

  int numel() const {
    int n = 1;
    for (int s : shape) n *= s;
    return n;
  }
  void ensure_grad();
};

// Value-semantics handle to a graph node.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(TensorNodePtr node) : node_(std::move(node)) {}

  static Tensor leaf(std::vector<int> shape, std::vector<double> data,
                     bool requires_grad = false);
  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const std::vector<int>& shape() const { return node_->shape; }
  int numel() const { return node_->numel(); }
  const std::vector<double>& value() const { return node_->value; }
  std::vector<double>& mutable_value() { return node_->value; }
  const std::vector<double>& grad() const { return node_->grad; }
  bool requires_grad() const { return node_->requires_grad; }
  double scalar() const;

  TensorNode* node() const { return node_.get(); }
  TensorNodePtr ptr() const { return node_; }

 private:
  TensorNodePtr node_;
};

// Runs reverse-mode accumulation from a scalar loss. Grads of every node in
// the reachable graph (leaves included) are reset first, so after the call
// leaf .grad holds exactly dLoss/dleaf.
void backward(const Tensor& loss);

// Elementwise; shapes must match.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
// k*a + c elementwise with scalar constants.
Tensor affine(const Tensor& a, double k, double c);

Tensor silu(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor sigmoid(const Tensor& a);

Tensor sum(const Tensor& a);   // -> shape {1}
Tensor mean(const Tensor& a);  // -> shape {1}
Tensor div_s(const Tensor& a, const Tensor& b);  // scalar / scalar

Tensor reshape(const Tensor& a, std::vector<int> shape);  // same numel

// x:{Cin,H,W}, w:{Cout,Cin,K,K} with odd K, b:{Cout}; stride 1, pad K/2.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b);
Tensor avg_pool2(const Tensor& x);          // {C,H,W} -> {C,H/2,W/2}
Tensor upsample_nearest2(const Tensor& x);  // {C,H,W} -> {C,2H,2W}
Tensor concat_channels(const Tensor& a, const Tensor& b);
Tensor add_channel(const Tensor& x, const Tensor& v);  // v:{C} broadcast over H,W

Tensor linear(const Tensor& w, const Tensor& x, const Tensor& b);  // w:{m,n} x:{n} b:{m}

// mean((a-b)^2) over all elements.
Tensor mse(const Tensor& a, const Tensor& b);

// -(1/d) * log( (1/M) sum_i exp(-d * n_i) ) for scalar per-sample mean NLLs
// n_i: the pixel-averaged mixture (log-mean-exp) negative log-likelihood.
// Gradients are the softmax responsibilities of the samples.
Tensor mixture_nll(const std::vector<Tensor>& nll_means, int d);
// mean over elements of softplus(z) - y*z, the Bernoulli NLL of targets y
// under logits z. y entries must be 0/1.
Tensor bernoulli_nll_mean(const Tensor& logits, const std::vector<double>& targets);

// z = mu + factor^T eps_r + sqrt(diag) .* eps_d, flattened to {d}.
// mu:{d}-numel, factor:{r,d}-numel (row j = column j of the d x r factor),
// diag:{d}-numel strictly positive.
Tensor lowrank_sample(const Tensor& mu, const Tensor& factor, const Tensor& diag,
                      const std::vector<double>& eps_r, const std::vector<double>& eps_d);

}  // namespace atfm

#endif  // ATFM_TENSOR_HPP_
