// tensor.cpp

// Copyright 2026  ATFM authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#include "atfm/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "atfm/errors.hpp"

namespace atfm {

namespace {

double sigmoid_scalar(double x) {
  if (x >= 0.0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus_scalar(double x) {
  // log(1 + e^x) = max(x,0) + log1p(e^{-|x|})
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

TensorNodePtr make_node(std::vector<int> shape, std::vector<TensorNodePtr> parents) {
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->value.resize(node->numel());
  bool needs = false;
  for (const auto& p : parents) needs = needs || p->requires_grad;
  node->requires_grad = needs;
  if (needs) node->parents = std::move(parents);
  return node;
}

int checked_numel_match(const Tensor& a, const Tensor& b, const char* op) {
  ATFM_CHECK(a.defined() && b.defined(), std::string(op) + ": undefined tensor");
  ATFM_CHECK(a.shape() == b.shape(), std::string(op) + ": shape mismatch");
  return a.numel();
}

}  // namespace

void TensorNode::ensure_grad() {
  grad.assign(numel(), 0.0);
}

Tensor Tensor::leaf(std::vector<int> shape, std::vector<double> data, bool requires_grad) {
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  ATFM_CHECK(static_cast<int>(data.size()) == node->numel(), "leaf: data size mismatch");
  node->value = std::move(data);
  node->requires_grad = requires_grad;
  return Tensor(node);
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->value.assign(node->numel(), 0.0);
  node->requires_grad = requires_grad;
  return Tensor(node);
}

double Tensor::scalar() const {
  ATFM_CHECK(node_ && node_->numel() == 1, "scalar: tensor is not a scalar");
  return node_->value[0];
}

void backward(const Tensor& loss) {
  ATFM_CHECK(loss.defined() && loss.numel() == 1, "backward: loss must be scalar");
  ATFM_CHECK(loss.node()->requires_grad, "backward: loss does not require grad");

  // Reverse DFS postorder = every consumer before its parents.
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> visited;
  std::vector<std::pair<TensorNode*, size_t>> stack;
  stack.emplace_back(loss.node(), 0);
  visited.insert(loss.node());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      TensorNode* parent = node->parents[idx++].get();
      if (parent->requires_grad && !visited.count(parent)) {
        visited.insert(parent);
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (TensorNode* node : order) node->ensure_grad();
  loss.node()->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward_fn) (*it)->backward_fn(**it);
  }
}

Tensor add(const Tensor& a, const Tensor& b) {
  const int n = checked_numel_match(a, b, "add");
  auto node = make_node(a.shape(), {a.ptr(), b.ptr()});
  const double* av = a.value().data();
  const double* bv = b.value().data();
  for (int i = 0; i < n; ++i) node->value[i] = av[i] + bv[i];
  if (node->requires_grad) {
    TensorNode* pa = a.node();
    TensorNode* pb = b.node();
    node->backward_fn = [pa, pb, n](TensorNode& self) {
      if (pa->requires_grad)
        for (int i = 0; i < n; ++i) pa->grad[i] += self.grad[i];
      if (pb->requires_grad)
        for (int i = 0; i < n; ++i) pb->grad[i] += self.grad[i];
    };
  }
  return Tensor(node);
}

Tensor sub(const Tensor& a, const Tensor& b) {
  const int n = checked_numel_match(a, b, "sub");
  auto node = make_node(a.shape(), {a.ptr(), b.ptr()});
  for (int i = 0; i < n; ++i) node->value[i] = a.value()[i] - b.value()[i];
  if (node->requires_grad) {
    TensorNode* pa = a.node();
    TensorNode* pb = b.node();
    node->backward_fn = [pa, pb, n](TensorNode& self) {
      if (pa->requires_grad)
        for (int i = 0; i < n; ++i) pa->grad[i] += self.grad[i];
      if (pb->requires_grad)
        for (int i = 0; i < n; ++i) pb->grad[i] -= self.grad[i];
    };
  }
  return Tensor(node);
}

Tensor mul(const Tensor& a, const Tensor& b) {
  const int n = checked_numel_match(a, b, "mul");
  auto node = make_node(a.shape(), {a.ptr(), b.ptr()});
  for (int i = 0; i < n; ++i) node->value[i] = a.value()[i] * b.value()[i];
  if (node->requires_grad) {
    TensorNode* pa = a.node();
    TensorNode* pb = b.node();
    node->backward_fn = [pa, pb, n](TensorNode& self) {
      if (pa->requires_grad)
        for (int i = 0; i < n; ++i) pa->grad[i] += self.grad[i] * pb->value[i];
      if (pb->requires_grad)
        for (int i = 0; i < n; ++i) pb->grad[i] += self.grad[i] * pa->value[i];
    };
  }
  return Tensor(node);
}

Tensor affine(const Tensor& a, double k, double c) {
  const int n = a.numel();
  auto node = make_node(a.shape(), {a.ptr()});
  for (int i = 0; i < n; ++i) node->value[i] = k * a.value()[i] + c;
  if (node->requires_grad) {
    TensorNode* pa = a.node();
    node->backward_fn = [pa, k, n](TensorNode& self) {
      for (int i = 0; i < n; ++i) pa->grad[i] += k * self.grad[i];
    };
  }
  return Tensor(node);
}

Tensor silu(const Tensor& a) {
  const int n = a.numel();
  auto node = make_node(a.shape(), {a.ptr()});
  for (int i = 0; i < n; ++i) {
    const double x = a.value()[i];
    node->value[i] = x * sigmoid_scalar(x);
  }
  if (node->requires_grad) {
    TensorNode* pa = a.node();
    node->backward_fn = [pa, n](TensorNode& self) {
      for (int i = 0; i < n; ++i) {
        const double x = pa->value[i];
        const double s = sigmoid_scalar(x);
        pa->grad[i] += self.grad[i] * (s * (1.0 + x * (1.0 - s)));
      }
    };
  }
  return Tensor(node);
}

Tensor softplus(const Tensor& a) {
  const int n = a.numel();
  auto node = make_node(a.shape(), {a.ptr()});
  for (int i = 0; i < n; ++i) node->value[i] = softplus_scalar(a.value()[i]);
  if (node->requires_grad) {
    TensorNode* pa = a.node();
    node->backward_fn = [pa, n](TensorNode& self) {
      for (int i = 0; i < n; ++i)
        pa->grad[i] += self.grad[i] * sigmoid_scalar(pa->value[i]);
    };
  }
  return Tensor(node);
}

Tensor sigmoid(const Tensor& a) {
  const int n = a.numel();
  auto node = make_node(a.shape(), {a.ptr()});
  for (int i = 0; i < n; ++i) node->value[i] = sigmoid_scalar(a.value()[i]);
  if (node->requires_grad) {
    TensorNode* pa = a.node();
    node->backward_fn = [pa, n](TensorNode& self) {
      for (int i = 0; i < n; ++i) {
        const double s = self.value[i];
        pa->grad[i] += self.grad[i] * s * (1.0 - s);
      }
    };
  }
  return Tensor(node);
}

Tensor sum(const Tensor& a) {
  const int n = a.numel();
  auto node = make_node({1}, {a.ptr()});
  double acc = 0.0;
  for (int i = 0; i < n; ++i) acc += a.value()[i];
  node->value[0] = acc;
  if (node->requires_grad) {
    TensorNode* pa = a.node();
    node->backward_fn = [pa, n](TensorNode& self) {
      const double g = self.grad[0];
      for (int i = 0; i < n; ++i) pa->grad[i] += g;
    };
  }
  return Tensor(node);
}

Tensor mean(const Tensor& a) {
  const int n = a.numel();
  Tensor s = sum(a);
  return affine(s, 1.0 / n, 0.0);
}

Tensor div_s(const Tensor& a, const Tensor& b) {
  ATFM_CHECK(a.numel() == 1 && b.numel() == 1, "div_s: operands must be scalars");
  auto node = make_node({1}, {a.ptr(), b.ptr()});
  node->value[0] = a.value()[0] / b.value()[0];
  if (node->requires_grad) {
    TensorNode* pa = a.node();
    TensorNode* pb = b.node();
    node->backward_fn = [pa, pb](TensorNode& self) {
      const double g = self.grad[0];
      const double bv = pb->value[0];
      if (pa->requires_grad) pa->grad[0] += g / bv;
      if (pb->requires_grad) pb->grad[0] -= g * pa->value[0] / (bv * bv);
    };
  }
  return Tensor(node);
}

Tensor reshape(const Tensor& a, std::vector<int> shape) {
  auto node = make_node(std::move(shape), {a.ptr()});
  ATFM_CHECK(node->numel() == a.numel(), "reshape: numel mismatch");
  node->value = a.value();
  if (node->requires_grad) {
    TensorNode* pa = a.node();
    const int n = a.numel();
    node->backward_fn = [pa, n](TensorNode& self) {
      for (int i = 0; i < n; ++i) pa->grad[i] += self.grad[i];
    };
  }
  return Tensor(node);
}

namespace {

// dst row += 3-tap stencil of src row with weights (w0, w1, w2) at offsets
// (-1, 0, +1); taps falling outside the row are dropped (zero padding).
inline void stencil_row_add(double* dst, const double* src, int wd, double w0, double w1,
                            double w2) {
  if (wd == 1) {
    dst[0] += w1 * src[0];
    return;
  }
  dst[0] += w1 * src[0] + w2 * src[1];
  for (int i = 1; i < wd - 1; ++i) dst[i] += w0 * src[i - 1] + w1 * src[i] + w2 * src[i + 1];
  dst[wd - 1] += w0 * src[wd - 2] + w1 * src[wd - 1];
}

// acc[kx] += sum_x g[x] * src[x + kx - 1] with out-of-row taps dropped.
inline void stencil_row_dots(const double* g, const double* src, int wd, double* acc) {
  double a0 = 0.0, a1 = 0.0, a2 = 0.0;
  for (int i = 1; i + 1 < wd; ++i) {
    const double gv = g[i];
    a0 += gv * src[i - 1];
    a1 += gv * src[i];
    a2 += gv * src[i + 1];
  }
  a1 += g[0] * src[0];
  if (wd > 1) {
    a2 += g[0] * src[1];
    a0 += g[wd - 1] * src[wd - 2];
    a1 += g[wd - 1] * src[wd - 1];
  }
  acc[0] += a0;
  acc[1] += a1;
  acc[2] += a2;
}

void conv3_forward(const double* xv, const double* wv, const double* bv, double* yv, int cin,
                   int cout, int h, int wd) {
  const int hw = h * wd;
  for (int co = 0; co < cout; ++co) {
    double* ybase = yv + static_cast<size_t>(co) * hw;
    const double bias = bv[co];
    for (int i = 0; i < hw; ++i) ybase[i] = bias;
    for (int ci = 0; ci < cin; ++ci) {
      const double* xbase = xv + static_cast<size_t>(ci) * hw;
      const double* w9 = wv + (static_cast<size_t>(co) * cin + ci) * 9;
      for (int y = 0; y < h; ++y) {
        double* dst = ybase + y * wd;
        for (int ky = 0; ky < 3; ++ky) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= h) continue;
          stencil_row_add(dst, xbase + sy * wd, wd, w9[ky * 3], w9[ky * 3 + 1], w9[ky * 3 + 2]);
        }
      }
    }
  }
}

void conv3_backward_input(const double* gy, const double* wv, double* gx, int cin, int cout,
                          int h, int wd) {
  const int hw = h * wd;
  for (int co = 0; co < cout; ++co) {
    const double* gbase = gy + static_cast<size_t>(co) * hw;
    for (int ci = 0; ci < cin; ++ci) {
      double* gxbase = gx + static_cast<size_t>(ci) * hw;
      const double* w9 = wv + (static_cast<size_t>(co) * cin + ci) * 9;
      for (int y = 0; y < h; ++y) {
        double* dst = gxbase + y * wd;
        for (int ky = 0; ky < 3; ++ky) {
          // gx[y] draws from gy[y - ky + 1] with the kx taps reversed
          const int sy = y - ky + 1;
          if (sy < 0 || sy >= h) continue;
          stencil_row_add(dst, gbase + sy * wd, wd, w9[ky * 3 + 2], w9[ky * 3 + 1], w9[ky * 3]);
        }
      }
    }
  }
}

void conv3_backward_weight(const double* gy, const double* xv, double* gw, int cin, int cout,
                           int h, int wd) {
  const int hw = h * wd;
  for (int co = 0; co < cout; ++co) {
    const double* gbase = gy + static_cast<size_t>(co) * hw;
    for (int ci = 0; ci < cin; ++ci) {
      const double* xbase = xv + static_cast<size_t>(ci) * hw;
      double* w9 = gw + (static_cast<size_t>(co) * cin + ci) * 9;
      for (int ky = 0; ky < 3; ++ky) {
        const int dy = ky - 1;
        const int y0 = std::max(0, -dy), y1 = std::min(h, h - dy);
        double acc[3] = {0.0, 0.0, 0.0};
        for (int y = y0; y < y1; ++y)
          stencil_row_dots(gbase + y * wd, xbase + (y + dy) * wd, wd, acc);
        w9[ky * 3] += acc[0];
        w9[ky * 3 + 1] += acc[1];
        w9[ky * 3 + 2] += acc[2];
      }
    }
  }
}

// Generic odd-k path; in practice only k = 1 reaches it.
void convk_forward(const double* xv, const double* wv, const double* bv, double* yv, int cin,
                   int cout, int h, int wd, int k) {
  const int pad = k / 2;
  const int hw = h * wd;
  for (int co = 0; co < cout; ++co) {
    double* ybase = yv + static_cast<size_t>(co) * hw;
    const double bias = bv[co];
    for (int i = 0; i < hw; ++i) ybase[i] = bias;
    for (int ci = 0; ci < cin; ++ci) {
      const double* xbase = xv + static_cast<size_t>(ci) * hw;
      const double* wbase = wv + (static_cast<size_t>(co) * cin + ci) * k * k;
      for (int ky = 0; ky < k; ++ky) {
        const int dy = ky - pad;
        const int y0 = std::max(0, -dy), y1 = std::min(h, h - dy);
        for (int kx = 0; kx < k; ++kx) {
          const int dx = kx - pad;
          const int x0 = std::max(0, -dx), x1 = std::min(wd, wd - dx);
          const double wgt = wbase[ky * k + kx];
          for (int y = y0; y < y1; ++y) {
            const double* src = xbase + (y + dy) * wd + (x0 + dx);
            double* dst = ybase + y * wd + x0;
            const int len = x1 - x0;
            for (int i = 0; i < len; ++i) dst[i] += wgt * src[i];
          }
        }
      }
    }
  }
}

void convk_backward(const double* gy, const double* xv, const double* wv, double* gx, double* gw,
                    int cin, int cout, int h, int wd, int k) {
  const int pad = k / 2;
  const int hw = h * wd;
  for (int co = 0; co < cout; ++co) {
    const double* gbase = gy + static_cast<size_t>(co) * hw;
    for (int ci = 0; ci < cin; ++ci) {
      const double* xbase = xv + static_cast<size_t>(ci) * hw;
      const double* wbase = wv + (static_cast<size_t>(co) * cin + ci) * k * k;
      for (int ky = 0; ky < k; ++ky) {
        const int dy = ky - pad;
        const int y0 = std::max(0, -dy), y1 = std::min(h, h - dy);
        for (int kx = 0; kx < k; ++kx) {
          const int dx = kx - pad;
          const int x0 = std::max(0, -dx), x1 = std::min(wd, wd - dx);
          const double wgt = wbase[ky * k + kx];
          double acc = 0.0;
          for (int y = y0; y < y1; ++y) {
            const double* g = gbase + y * wd + x0;
            const double* s = xbase + (y + dy) * wd + (x0 + dx);
            double* gxrow = gx ? gx + static_cast<size_t>(ci) * hw + (y + dy) * wd + (x0 + dx)
                               : nullptr;
            const int len = x1 - x0;
            for (int i = 0; i < len; ++i) {
              acc += g[i] * s[i];
              if (gxrow) gxrow[i] += wgt * g[i];
            }
          }
          if (gw) gw[(static_cast<size_t>(co) * cin + ci) * k * k + ky * k + kx] += acc;
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b) {
  ATFM_CHECK(x.shape().size() == 3, "conv2d: input must be {C,H,W}");
  ATFM_CHECK(w.shape().size() == 4, "conv2d: weight must be {Cout,Cin,K,K}");
  const int cin = x.shape()[0], h = x.shape()[1], wd = x.shape()[2];
  const int cout = w.shape()[0], k = w.shape()[2];
  ATFM_CHECK(w.shape()[1] == cin, "conv2d: channel mismatch");
  ATFM_CHECK(w.shape()[3] == k && k % 2 == 1, "conv2d: kernel must be square odd");
  ATFM_CHECK(b.shape() == std::vector<int>{cout}, "conv2d: bias shape");
  const int hw = h * wd;

  auto node = make_node({cout, h, wd}, {x.ptr(), w.ptr(), b.ptr()});
  if (k == 3) {
    conv3_forward(x.value().data(), w.value().data(), b.value().data(), node->value.data(), cin,
                  cout, h, wd);
  } else {
    convk_forward(x.value().data(), w.value().data(), b.value().data(), node->value.data(), cin,
                  cout, h, wd, k);
  }

  if (node->requires_grad) {
    TensorNode* px = x.node();
    TensorNode* pw = w.node();
    TensorNode* pb = b.node();
    node->backward_fn = [px, pw, pb, cin, cout, h, wd, k, hw](TensorNode& self) {
      const double* gy = self.grad.data();
      if (pb->requires_grad) {
        for (int co = 0; co < cout; ++co) {
          const double* gbase = gy + static_cast<size_t>(co) * hw;
          double acc = 0.0;
          for (int i = 0; i < hw; ++i) acc += gbase[i];
          pb->grad[co] += acc;
        }
      }
      if (k == 3) {
        if (pw->requires_grad)
          conv3_backward_weight(gy, px->value.data(), pw->grad.data(), cin, cout, h, wd);
        if (px->requires_grad)
          conv3_backward_input(gy, pw->value.data(), px->grad.data(), cin, cout, h, wd);
      } else {
        convk_backward(gy, px->value.data(), pw->value.data(),
                       px->requires_grad ? px->grad.data() : nullptr,
                       pw->requires_grad ? pw->grad.data() : nullptr, cin, cout, h, wd, k);
      }
    };
  }
  return Tensor(node);
}

Tensor avg_pool2(const Tensor& x) {
  ATFM_CHECK(x.shape().size() == 3, "avg_pool2: input must be {C,H,W}");
  const int c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
  ATFM_CHECK(h % 2 == 0 && w % 2 == 0, "avg_pool2: H and W must be even");
  const int oh = h / 2, ow = w / 2;
  auto node = make_node({c, oh, ow}, {x.ptr()});
  const double* xv = x.value().data();
  for (int ci = 0; ci < c; ++ci) {
    const double* in = xv + static_cast<size_t>(ci) * h * w;
    double* out = node->value.data() + static_cast<size_t>(ci) * oh * ow;
    for (int y = 0; y < oh; ++y)
      for (int xo = 0; xo < ow; ++xo) {
        const double* p = in + (2 * y) * w + 2 * xo;
        out[y * ow + xo] = 0.25 * (p[0] + p[1] + p[w] + p[w + 1]);
      }
  }
  if (node->requires_grad) {
    TensorNode* px = x.node();
    node->backward_fn = [px, c, h, w, oh, ow](TensorNode& self) {
      for (int ci = 0; ci < c; ++ci) {
        double* gx = px->grad.data() + static_cast<size_t>(ci) * h * w;
        const double* g = self.grad.data() + static_cast<size_t>(ci) * oh * ow;
        for (int y = 0; y < oh; ++y)
          for (int xo = 0; xo < ow; ++xo) {
            const double gv = 0.25 * g[y * ow + xo];
            double* p = gx + (2 * y) * w + 2 * xo;
            p[0] += gv;
            p[1] += gv;
            p[w] += gv;
            p[w + 1] += gv;
          }
      }
    };
  }
  return Tensor(node);
}

Tensor upsample_nearest2(const Tensor& x) {
  ATFM_CHECK(x.shape().size() == 3, "upsample_nearest2: input must be {C,H,W}");
  const int c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
  const int oh = h * 2, ow = w * 2;
  auto node = make_node({c, oh, ow}, {x.ptr()});
  const double* xv = x.value().data();
  for (int ci = 0; ci < c; ++ci) {
    const double* in = xv + static_cast<size_t>(ci) * h * w;
    double* out = node->value.data() + static_cast<size_t>(ci) * oh * ow;
    for (int y = 0; y < h; ++y)
      for (int xo = 0; xo < w; ++xo) {
        const double v = in[y * w + xo];
        double* p = out + (2 * y) * ow + 2 * xo;
        p[0] = v;
        p[1] = v;
        p[ow] = v;
        p[ow + 1] = v;
      }
  }
  if (node->requires_grad) {
    TensorNode* px = x.node();
    node->backward_fn = [px, c, h, w, oh, ow](TensorNode& self) {
      for (int ci = 0; ci < c; ++ci) {
        double* gx = px->grad.data() + static_cast<size_t>(ci) * h * w;
        const double* g = self.grad.data() + static_cast<size_t>(ci) * oh * ow;
        for (int y = 0; y < h; ++y)
          for (int xo = 0; xo < w; ++xo) {
            const double* p = g + (2 * y) * ow + 2 * xo;
            gx[y * w + xo] += p[0] + p[1] + p[ow] + p[ow + 1];
          }
      }
    };
  }
  return Tensor(node);
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  ATFM_CHECK(a.shape().size() == 3 && b.shape().size() == 3, "concat_channels: inputs must be {C,H,W}");
  ATFM_CHECK(a.shape()[1] == b.shape()[1] && a.shape()[2] == b.shape()[2],
             "concat_channels: spatial shape mismatch");
  const int ca = a.shape()[0], cb = b.shape()[0];
  const int h = a.shape()[1], w = a.shape()[2];
  const int hw = h * w;
  auto node = make_node({ca + cb, h, w}, {a.ptr(), b.ptr()});
  std::copy(a.value().begin(), a.value().end(), node->value.begin());
  std::copy(b.value().begin(), b.value().end(), node->value.begin() + static_cast<size_t>(ca) * hw);
  if (node->requires_grad) {
    TensorNode* pa = a.node();
    TensorNode* pb = b.node();
    node->backward_fn = [pa, pb, ca, cb, hw](TensorNode& self) {
      if (pa->requires_grad)
        for (int i = 0; i < ca * hw; ++i) pa->grad[i] += self.grad[i];
      if (pb->requires_grad)
        for (int i = 0; i < cb * hw; ++i)
          pb->grad[i] += self.grad[static_cast<size_t>(ca) * hw + i];
    };
  }
  return Tensor(node);
}

Tensor add_channel(const Tensor& x, const Tensor& v) {
  ATFM_CHECK(x.shape().size() == 3, "add_channel: input must be {C,H,W}");
  const int c = x.shape()[0], hw = x.shape()[1] * x.shape()[2];
  ATFM_CHECK(v.shape() == std::vector<int>{c}, "add_channel: bias shape mismatch");
  auto node = make_node(x.shape(), {x.ptr(), v.ptr()});
  for (int ci = 0; ci < c; ++ci) {
    const double bias = v.value()[ci];
    const double* in = x.value().data() + static_cast<size_t>(ci) * hw;
    double* out = node->value.data() + static_cast<size_t>(ci) * hw;
    for (int i = 0; i < hw; ++i) out[i] = in[i] + bias;
  }
  if (node->requires_grad) {
    TensorNode* px = x.node();
    TensorNode* pv = v.node();
    node->backward_fn = [px, pv, c, hw](TensorNode& self) {
      if (px->requires_grad)
        for (int i = 0; i < c * hw; ++i) px->grad[i] += self.grad[i];
      if (pv->requires_grad) {
        for (int ci = 0; ci < c; ++ci) {
          const double* g = self.grad.data() + static_cast<size_t>(ci) * hw;
          double acc = 0.0;
          for (int i = 0; i < hw; ++i) acc += g[i];
          pv->grad[ci] += acc;
        }
      }
    };
  }
  return Tensor(node);
}

Tensor linear(const Tensor& w, const Tensor& x, const Tensor& b) {
  ATFM_CHECK(w.shape().size() == 2, "linear: weight must be {m,n}");
  const int m = w.shape()[0], n = w.shape()[1];
  ATFM_CHECK(x.shape() == std::vector<int>{n}, "linear: input shape mismatch");
  ATFM_CHECK(b.shape() == std::vector<int>{m}, "linear: bias shape mismatch");
  auto node = make_node({m}, {w.ptr(), x.ptr(), b.ptr()});
  for (int i = 0; i < m; ++i) {
    const double* wrow = w.value().data() + static_cast<size_t>(i) * n;
    double acc = b.value()[i];
    for (int j = 0; j < n; ++j) acc += wrow[j] * x.value()[j];
    node->value[i] = acc;
  }
  if (node->requires_grad) {
    TensorNode* pw = w.node();
    TensorNode* px = x.node();
    TensorNode* pb = b.node();
    node->backward_fn = [pw, px, pb, m, n](TensorNode& self) {
      for (int i = 0; i < m; ++i) {
        const double g = self.grad[i];
        if (pb->requires_grad) pb->grad[i] += g;
        if (pw->requires_grad) {
          double* gw = pw->grad.data() + static_cast<size_t>(i) * n;
          for (int j = 0; j < n; ++j) gw[j] += g * px->value[j];
        }
        if (px->requires_grad) {
          const double* wrow = pw->value.data() + static_cast<size_t>(i) * n;
          for (int j = 0; j < n; ++j) px->grad[j] += g * wrow[j];
        }
      }
    };
  }
  return Tensor(node);
}

Tensor mse(const Tensor& a, const Tensor& b) {
  const int n = checked_numel_match(a, b, "mse");
  auto node = make_node({1}, {a.ptr(), b.ptr()});
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const double d = a.value()[i] - b.value()[i];
    acc += d * d;
  }
  node->value[0] = acc / n;
  if (node->requires_grad) {
    TensorNode* pa = a.node();
    TensorNode* pb = b.node();
    node->backward_fn = [pa, pb, n](TensorNode& self) {
      const double g = 2.0 * self.grad[0] / n;
      for (int i = 0; i < n; ++i) {
        const double d = pa->value[i] - pb->value[i];
        if (pa->requires_grad) pa->grad[i] += g * d;
        if (pb->requires_grad) pb->grad[i] -= g * d;
      }
    };
  }
  return Tensor(node);
}

Tensor bernoulli_nll_mean(const Tensor& logits, const std::vector<double>& targets) {
  const int n = logits.numel();
  ATFM_CHECK(static_cast<int>(targets.size()) == n, "bernoulli_nll_mean: target size mismatch");
  auto node = make_node({1}, {logits.ptr()});
  double acc = 0.0;
  for (int i = 0; i < n; ++i)
    acc += softplus_scalar(logits.value()[i]) - targets[i] * logits.value()[i];
  node->value[0] = acc / n;
  if (node->requires_grad) {
    TensorNode* pz = logits.node();
    auto y = std::make_shared<std::vector<double>>(targets);
    node->backward_fn = [pz, y, n](TensorNode& self) {
      const double g = self.grad[0] / n;
      for (int i = 0; i < n; ++i)
        pz->grad[i] += g * (sigmoid_scalar(pz->value[i]) - (*y)[i]);
    };
  }
  return Tensor(node);
}

Tensor mixture_nll(const std::vector<Tensor>& nll_means, int d) {
  const int m = static_cast<int>(nll_means.size());
  ATFM_CHECK(m >= 1, "mixture_nll: needs at least one sample");
  ATFM_CHECK(d >= 1, "mixture_nll: d must be >= 1");
  std::vector<TensorNodePtr> parents;
  parents.reserve(m);
  std::vector<double> loglik(m);  // l_i = -d * n_i
  for (int i = 0; i < m; ++i) {
    ATFM_CHECK(nll_means[i].numel() == 1, "mixture_nll: inputs must be scalars");
    parents.push_back(nll_means[i].ptr());
    loglik[i] = -static_cast<double>(d) * nll_means[i].value()[0];
  }
  auto node = make_node({1}, std::move(parents));
  const double peak = *std::max_element(loglik.begin(), loglik.end());
  double acc = 0.0;
  for (int i = 0; i < m; ++i) acc += std::exp(loglik[i] - peak);
  node->value[0] = -(peak + std::log(acc / m)) / d;
  if (node->requires_grad) {
    auto weights = std::make_shared<std::vector<double>>(m);
    for (int i = 0; i < m; ++i) (*weights)[i] = std::exp(loglik[i] - peak) / acc;
    std::vector<TensorNode*> raw(m);
    for (int i = 0; i < m; ++i) raw[i] = node->parents[i].get();
    node->backward_fn = [raw, weights, m](TensorNode& self) {
      for (int i = 0; i < m; ++i)
        if (raw[i]->requires_grad) raw[i]->grad[0] += self.grad[0] * (*weights)[i];
    };
  }
  return Tensor(node);
}

Tensor lowrank_sample(const Tensor& mu, const Tensor& factor, const Tensor& diag,
                      const std::vector<double>& eps_r, const std::vector<double>& eps_d) {
  const int d = mu.numel();
  const int r = static_cast<int>(eps_r.size());
  ATFM_CHECK(factor.numel() == r * d, "lowrank_sample: factor numel mismatch");
  ATFM_CHECK(diag.numel() == d, "lowrank_sample: diag numel mismatch");
  ATFM_CHECK(static_cast<int>(eps_d.size()) == d, "lowrank_sample: eps_d size mismatch");
  for (int i = 0; i < d; ++i)
    if (!(diag.value()[i] > 0.0))
      throw NumericalError("lowrank_sample: diag entries must be strictly positive");

  auto node = make_node({d}, {mu.ptr(), factor.ptr(), diag.ptr()});
  for (int i = 0; i < d; ++i)
    node->value[i] = mu.value()[i] + std::sqrt(diag.value()[i]) * eps_d[i];
  for (int j = 0; j < r; ++j) {
    const double e = eps_r[j];
    const double* col = factor.value().data() + static_cast<size_t>(j) * d;
    for (int i = 0; i < d; ++i) node->value[i] += e * col[i];
  }
  if (node->requires_grad) {
    TensorNode* pmu = mu.node();
    TensorNode* pfac = factor.node();
    TensorNode* pdiag = diag.node();
    auto er = std::make_shared<std::vector<double>>(eps_r);
    auto ed = std::make_shared<std::vector<double>>(eps_d);
    node->backward_fn = [pmu, pfac, pdiag, er, ed, d, r](TensorNode& self) {
      if (pmu->requires_grad)
        for (int i = 0; i < d; ++i) pmu->grad[i] += self.grad[i];
      if (pfac->requires_grad) {
        for (int j = 0; j < r; ++j) {
          const double e = (*er)[j];
          double* gf = pfac->grad.data() + static_cast<size_t>(j) * d;
          for (int i = 0; i < d; ++i) gf[i] += e * self.grad[i];
        }
      }
      if (pdiag->requires_grad) {
        for (int i = 0; i < d; ++i)
          pdiag->grad[i] +=
              self.grad[i] * (*ed)[i] * 0.5 / std::sqrt(pdiag->value[i]);
      }
    };
  }
  return Tensor(node);
}

}  // namespace atfm
