// nets.cpp

// Copyright 2026  ATFM authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#include "atfm/nets.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "atfm/errors.hpp"
#include "atfm/rng.hpp"

namespace atfm {

namespace {

constexpr uint32_t kCheckpointVersion = 1;

uint64_t fnv1a(const void* data, size_t len, uint64_t h = 1469598103934665603ULL) {
  const auto* p = static_cast<const uint8_t*>(data);
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

enum class Init { kHe, kHeSmall, kZero };

struct LayerSpec {
  std::string name;
  std::vector<int> shape;
  Init init = Init::kHe;
};

std::vector<LayerSpec> gtr_layers(const NetConfig& c) {
  const auto& w = c.widths;
  const int L = c.levels();
  std::vector<LayerSpec> specs;
  specs.push_back({"in.w", {w[0], 1, 3, 3}});
  specs.push_back({"in.b", {w[0]}, Init::kZero});
  for (int i = 0; i < L; ++i) {
    specs.push_back({"enc" + std::to_string(i) + ".w", {w[i], w[i], 3, 3}});
    specs.push_back({"enc" + std::to_string(i) + ".b", {w[i]}, Init::kZero});
  }
  for (int i = 0; i + 1 < L; ++i) {
    specs.push_back({"down" + std::to_string(i) + ".w", {w[i + 1], w[i], 3, 3}});
    specs.push_back({"down" + std::to_string(i) + ".b", {w[i + 1]}, Init::kZero});
  }
  for (int i = L - 2; i >= 0; --i) {
    specs.push_back({"up" + std::to_string(i) + ".w", {w[i], w[i + 1], 3, 3}});
    specs.push_back({"up" + std::to_string(i) + ".b", {w[i]}, Init::kZero});
    specs.push_back({"fuse" + std::to_string(i) + ".w", {w[i], 2 * w[i], 3, 3}});
    specs.push_back({"fuse" + std::to_string(i) + ".b", {w[i]}, Init::kZero});
  }
  specs.push_back({"head_mu.w", {1, w[0], 1, 1}});
  specs.push_back({"head_mu.b", {1}, Init::kZero});
  specs.push_back({"head_factor.w", {c.rank, w[0], 1, 1}, Init::kHeSmall});
  specs.push_back({"head_factor.b", {c.rank}, Init::kZero});
  specs.push_back({"head_diag.w", {1, w[0], 1, 1}, Init::kHeSmall});
  specs.push_back({"head_diag.b", {1}, Init::kZero});
  return specs;
}

void res_block_layers(std::vector<LayerSpec>* specs, const std::string& prefix, int c,
                      int time_dim) {
  specs->push_back({prefix + ".conv1.w", {c, c, 3, 3}});
  specs->push_back({prefix + ".conv1.b", {c}, Init::kZero});
  specs->push_back({prefix + ".temb.w", {c, time_dim}});
  specs->push_back({prefix + ".temb.b", {c}, Init::kZero});
  specs->push_back({prefix + ".conv2.w", {c, c, 3, 3}});
  specs->push_back({prefix + ".conv2.b", {c}, Init::kZero});
}

std::vector<LayerSpec> stnet_layers(const NetConfig& c) {
  const auto& w = c.widths;
  const int L = c.levels();
  const int td = c.time_dim;
  std::vector<LayerSpec> specs;
  specs.push_back({"temb1.w", {td, td}});
  specs.push_back({"temb1.b", {td}, Init::kZero});
  specs.push_back({"temb2.w", {td, td}});
  specs.push_back({"temb2.b", {td}, Init::kZero});
  specs.push_back({"in.w", {w[0], 1, 3, 3}});
  specs.push_back({"in.b", {w[0]}, Init::kZero});
  for (int i = 0; i + 1 < L; ++i) {
    res_block_layers(&specs, "res" + std::to_string(i), w[i], td);
    specs.push_back({"down" + std::to_string(i) + ".w", {w[i + 1], w[i], 3, 3}});
    specs.push_back({"down" + std::to_string(i) + ".b", {w[i + 1]}, Init::kZero});
  }
  res_block_layers(&specs, "mid", w[L - 1], td);
  for (int i = L - 2; i >= 0; --i) {
    specs.push_back({"up" + std::to_string(i) + ".w", {w[i], w[i + 1], 3, 3}});
    specs.push_back({"up" + std::to_string(i) + ".b", {w[i]}, Init::kZero});
    specs.push_back({"fuse" + std::to_string(i) + ".w", {w[i], 2 * w[i], 3, 3}});
    specs.push_back({"fuse" + std::to_string(i) + ".b", {w[i]}, Init::kZero});
    res_block_layers(&specs, "dec" + std::to_string(i), w[i], td);
  }
  specs.push_back({"out.w", {1, w[0], 1, 1}, Init::kZero});
  specs.push_back({"out.b", {1}, Init::kZero});
  return specs;
}

ParameterStore init_from_specs(const std::string& kind, const NetConfig& config, uint64_t seed,
                               const std::vector<LayerSpec>& specs) {
  ParameterStore store(kind, config, seed);
  for (size_t li = 0; li < specs.size(); ++li) {
    const LayerSpec& spec = specs[li];
    int numel = 1;
    for (int s : spec.shape) numel *= s;
    std::vector<double> values(numel, 0.0);
    if (spec.init != Init::kZero) {
      // fan_in: conv {cout,cin,k,k} -> cin*k*k, linear {m,n} -> n
      int fan_in = 1;
      for (size_t i = 1; i < spec.shape.size(); ++i) fan_in *= spec.shape[i];
      double stddev = std::sqrt(2.0 / fan_in);
      if (spec.init == Init::kHeSmall) stddev *= 0.05;
      RngStream rng(seed, {7, li});
      for (double& v : values) v = stddev * rng.normal();
    }
    store.create(spec.name, spec.shape, std::move(values));
  }
  return store;
}

Tensor conv_silu(const ParameterStore& p, const std::string& prefix, const Tensor& x) {
  return silu(conv2d(x, p.get(prefix + ".w"), p.get(prefix + ".b")));
}

Tensor res_block(const ParameterStore& p, const std::string& prefix, const Tensor& h,
                 const Tensor& temb) {
  Tensor a = conv2d(h, p.get(prefix + ".conv1.w"), p.get(prefix + ".conv1.b"));
  const Tensor tb = linear(p.get(prefix + ".temb.w"), temb, p.get(prefix + ".temb.b"));
  a = silu(add_channel(a, tb));
  a = conv2d(a, p.get(prefix + ".conv2.w"), p.get(prefix + ".conv2.b"));
  return add(h, a);
}

}  // namespace

void NetConfig::validate() const {
  ATFM_CHECK(!widths.empty(), "net config: widths must be non-empty");
  for (int w : widths) ATFM_CHECK(w >= 1, "net config: widths must be >= 1");
  ATFM_CHECK(rank >= 1, "net config: rank must be >= 1");
  ATFM_CHECK(time_dim >= 2 && time_dim % 2 == 0, "net config: time_dim must be even and >= 2");
  ATFM_CHECK(logit_c > 0.0, "net config: logit_c must be > 0");
  ATFM_CHECK(image_size >= 8, "net config: image_size must be >= 8");
  const int down = 1 << (levels() - 1);
  ATFM_CHECK(image_size % down == 0,
             "net config: image_size must be divisible by 2^(levels-1)");
}

std::string NetConfig::to_json(int indent) const {
  nlohmann::json j = {{"image_size", image_size}, {"widths", widths},   {"rank", rank},
                      {"time_dim", time_dim},     {"logit_c", logit_c}};
  return j.dump(indent);
}

NetConfig NetConfig::from_json_text(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) throw ValidationError("net config: invalid JSON");
  NetConfig c;
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (key != "image_size" && key != "widths" && key != "rank" && key != "time_dim" &&
        key != "logit_c")
      throw ValidationError("net config: unknown key '" + key + "'");
  }
  c.image_size = j.value("image_size", c.image_size);
  if (j.contains("widths")) c.widths = j["widths"].get<std::vector<int>>();
  c.rank = j.value("rank", c.rank);
  c.time_dim = j.value("time_dim", c.time_dim);
  c.logit_c = j.value("logit_c", c.logit_c);
  c.validate();
  return c;
}

uint64_t NetConfig::hash() const {
  const std::string s = to_json();
  return fnv1a(s.data(), s.size());
}

Tensor ParameterStore::create(const std::string& name, std::vector<int> shape,
                              std::vector<double> values) {
  ATFM_CHECK(!frozen_, "parameter store: cannot create parameters after freeze");
  ATFM_CHECK(find(name) < 0, "parameter store: duplicate parameter '" + name + "'");
  Tensor t = Tensor::leaf(std::move(shape), std::move(values), /*requires_grad=*/true);
  names_.push_back(name);
  tensors_.push_back(t);
  return t;
}

Tensor ParameterStore::get(const std::string& name) const {
  const int i = find(name);
  ATFM_CHECK(i >= 0, "parameter store: unknown parameter '" + name + "'");
  return tensors_[i];
}

bool ParameterStore::has(const std::string& name) const { return find(name) >= 0; }

int ParameterStore::find(const std::string& name) const {
  for (size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return static_cast<int>(i);
  return -1;
}

int64_t ParameterStore::param_count() const {
  int64_t n = 0;
  for (const Tensor& t : tensors_) n += t.numel();
  return n;
}

void ParameterStore::freeze() {
  frozen_ = true;
  for (Tensor& t : tensors_) t.node()->requires_grad = false;
}

void ParameterStore::check_finite() const {
  for (size_t i = 0; i < tensors_.size(); ++i)
    for (double v : tensors_[i].value())
      if (!std::isfinite(v))
        throw NumericalError("parameter store: non-finite value in '" + names_[i] + "'");
}

namespace {

void put_u32(std::string* out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out->push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string* out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out->push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

uint32_t get_u32(const uint8_t* p) {
  uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

uint64_t get_u64(const uint8_t* p) {
  uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

std::string f32_payload(const std::vector<Tensor>& tensors) {
  std::string payload;
  for (const Tensor& t : tensors) {
    for (double d : t.value()) {
      const float f = static_cast<float>(d);
      uint32_t bits;
      std::memcpy(&bits, &f, 4);
      put_u32(&payload, bits);
    }
  }
  return payload;
}

}  // namespace

void ParameterStore::save(const std::string& path) const {
  nlohmann::json header;
  header["kind"] = kind_;
  header["config"] = nlohmann::json::parse(config_.to_json());
  header["config_hash"] = config_.hash();
  header["frozen"] = frozen_;
  header["step"] = step_;
  header["seed"] = seed_;
  header["param_count"] = param_count();
  nlohmann::json tensor_list = nlohmann::json::array();
  int64_t offset = 0;
  for (size_t i = 0; i < names_.size(); ++i) {
    tensor_list.push_back({{"name", names_[i]},
                           {"shape", tensors_[i].shape()},
                           {"offset", offset},
                           {"numel", tensors_[i].numel()}});
    offset += tensors_[i].numel();
  }
  header["tensors"] = tensor_list;
  const std::string header_text = header.dump();

  std::string blob = "ATFM";
  put_u32(&blob, kCheckpointVersion);
  put_u64(&blob, header_text.size());
  blob += header_text;
  blob += f32_payload(tensors_);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("checkpoint: cannot open for writing: " + path);
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) throw IoError("checkpoint: write failed: " + path);
}

ParameterStore ParameterStore::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("checkpoint: cannot open: " + path);
  std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (blob.size() < 16 || blob.compare(0, 4, "ATFM") != 0)
    throw IoError("checkpoint: bad magic: " + path);
  const auto* bytes = reinterpret_cast<const uint8_t*>(blob.data());
  const uint32_t version = get_u32(bytes + 4);
  if (version != kCheckpointVersion)
    throw IoError("checkpoint: unsupported version " + std::to_string(version) + ": " + path);
  const uint64_t header_len = get_u64(bytes + 8);
  if (16 + header_len > blob.size()) throw IoError("checkpoint: truncated header: " + path);
  nlohmann::json header =
      nlohmann::json::parse(blob.substr(16, header_len), nullptr, /*allow_exceptions=*/false);
  if (header.is_discarded()) throw IoError("checkpoint: malformed header JSON: " + path);

  NetConfig config = NetConfig::from_json_text(header.at("config").dump());
  ParameterStore store(header.value("kind", ""), config, header.value("seed", uint64_t{0}));
  store.step_ = header.value("step", int64_t{0});

  const size_t payload_start = 16 + header_len;
  size_t offset_floats = 0;
  for (const auto& entry : header.at("tensors")) {
    const std::string name = entry.at("name").get<std::string>();
    const std::vector<int> shape = entry.at("shape").get<std::vector<int>>();
    const int64_t numel = entry.at("numel").get<int64_t>();
    std::vector<double> values(numel);
    const size_t byte_off = payload_start + 4 * (offset_floats);
    if (byte_off + 4 * numel > blob.size())
      throw IoError("checkpoint: truncated payload: " + path);
    for (int64_t i = 0; i < numel; ++i) {
      const uint32_t bits = get_u32(bytes + byte_off + 4 * i);
      float f;
      std::memcpy(&f, &bits, 4);
      values[i] = static_cast<double>(f);
    }
    store.create(name, shape, std::move(values));
    offset_floats += numel;
  }
  if (header.value("frozen", false)) store.freeze();
  return store;
}

uint64_t ParameterStore::content_hash() const {
  const std::string payload = f32_payload(tensors_);
  return fnv1a(payload.data(), payload.size());
}

std::vector<double> time_embedding(double t, int dim) {
  ATFM_CHECK(dim >= 2 && dim % 2 == 0, "time_embedding: dim must be even and >= 2");
  const int half = dim / 2;
  std::vector<double> emb(dim);
  // Scaled to the customary 0..1000 range before the sinusoid.
  const double ts = 1000.0 * t;
  for (int i = 0; i < half; ++i) {
    const double freq =
        half > 1 ? std::exp(-std::log(10000.0) * i / (half - 1)) : 1.0;
    emb[i] = std::sin(ts * freq);
    emb[half + i] = std::cos(ts * freq);
  }
  return emb;
}

ParameterStore init_gtr_params(const NetConfig& config, uint64_t seed) {
  config.validate();
  return init_from_specs("gtr", config, seed, gtr_layers(config));
}

ParameterStore init_stnet_params(const NetConfig& config, uint64_t seed) {
  config.validate();
  return init_from_specs("stnet", config, seed, stnet_layers(config));
}

LowRankGaussian GtrOutput::snapshot() const {
  const int d = mu.numel();
  const int r = factor.shape()[0];
  Eigen::VectorXd m(d), dg(d);
  Eigen::MatrixXd f(d, r);
  for (int i = 0; i < d; ++i) {
    m[i] = mu.value()[i];
    dg[i] = diag.value()[i];
  }
  for (int j = 0; j < r; ++j)
    for (int i = 0; i < d; ++i) f(i, j) = factor.value()[static_cast<size_t>(j) * d + i];
  return make_lowrank_gaussian(std::move(m), std::move(f), std::move(dg));
}

GtrOutput gtr_forward(const ParameterStore& params, const Grid& image) {
  const NetConfig& cfg = params.config();
  ATFM_CHECK(params.kind() == "gtr", "gtr_forward: checkpoint kind is not 'gtr'");
  ATFM_CHECK(image.h == cfg.image_size && image.w == cfg.image_size,
             "gtr_forward: image shape does not match config");
  const int L = cfg.levels();
  const int h = image.h, w = image.w;
  const int d = h * w;

  Tensor x = Tensor::leaf({1, h, w}, image.v);
  Tensor hid = conv_silu(params, "in", x);
  std::vector<Tensor> skips;
  for (int i = 0; i < L; ++i) {
    hid = conv_silu(params, "enc" + std::to_string(i), hid);
    if (i + 1 < L) {
      skips.push_back(hid);
      hid = avg_pool2(hid);
      hid = conv_silu(params, "down" + std::to_string(i), hid);
    }
  }
  for (int i = L - 2; i >= 0; --i) {
    hid = upsample_nearest2(hid);
    hid = conv_silu(params, "up" + std::to_string(i), hid);
    hid = concat_channels(hid, skips[i]);
    hid = conv_silu(params, "fuse" + std::to_string(i), hid);
  }

  GtrOutput out;
  out.mu = reshape(conv2d(hid, params.get("head_mu.w"), params.get("head_mu.b")), {d});
  out.factor =
      reshape(conv2d(hid, params.get("head_factor.w"), params.get("head_factor.b")),
              {cfg.rank, d});
  Tensor raw = reshape(conv2d(hid, params.get("head_diag.w"), params.get("head_diag.b")), {d});
  out.diag = affine(softplus(raw), 1.0, kDiagFloor);
  return out;
}

LowRankGaussian gtr_distribution(const ParameterStore& params, const Grid& image) {
  return gtr_forward(params, image).snapshot();
}

Tensor stnet_forward(const ParameterStore& params, const Tensor& x_t, double t) {
  const NetConfig& cfg = params.config();
  ATFM_CHECK(params.kind() == "stnet", "stnet_forward: checkpoint kind is not 'stnet'");
  ATFM_CHECK(t >= 0.0 && t <= 1.0, "stnet_forward: t outside [0,1]");
  const int h = cfg.image_size, w = cfg.image_size;
  Tensor x = x_t;
  if (x.shape() == std::vector<int>{h, w}) x = reshape(x, {1, h, w});
  ATFM_CHECK(x.shape() == std::vector<int>({1, h, w}),
             "stnet_forward: input shape does not match config");
  const int L = cfg.levels();

  Tensor emb = Tensor::leaf({cfg.time_dim}, time_embedding(t, cfg.time_dim));
  emb = silu(linear(params.get("temb1.w"), emb, params.get("temb1.b")));
  emb = linear(params.get("temb2.w"), emb, params.get("temb2.b"));

  Tensor hid = conv2d(x, params.get("in.w"), params.get("in.b"));
  std::vector<Tensor> skips;
  for (int i = 0; i + 1 < L; ++i) {
    hid = res_block(params, "res" + std::to_string(i), hid, emb);
    skips.push_back(hid);
    hid = avg_pool2(hid);
    hid = conv_silu(params, "down" + std::to_string(i), hid);
  }
  hid = res_block(params, "mid", hid, emb);
  for (int i = L - 2; i >= 0; --i) {
    hid = upsample_nearest2(hid);
    hid = conv_silu(params, "up" + std::to_string(i), hid);
    hid = concat_channels(hid, skips[i]);
    hid = conv_silu(params, "fuse" + std::to_string(i), hid);
    hid = res_block(params, "dec" + std::to_string(i), hid, emb);
  }
  return conv2d(hid, params.get("out.w"), params.get("out.b"));
}

Grid stnet_velocity(const ParameterStore& params, const Grid& x_t, double t) {
  Tensor x = Tensor::leaf({x_t.h, x_t.w}, x_t.v);
  Tensor v = stnet_forward(params, x, t);
  Grid out(x_t.h, x_t.w);
  out.v = v.value();
  return out;
}

double grad_check(const std::function<Tensor()>& loss_fn, ParameterStore& params, int probes,
                  double eps, uint64_t seed) {
  ATFM_CHECK(probes >= 1, "grad_check: probes must be >= 1");
  ATFM_CHECK(eps > 0.0, "grad_check: eps must be > 0");
  ATFM_CHECK(!params.frozen(), "grad_check: store is frozen");

  Tensor loss = loss_fn();
  backward(loss);
  std::vector<std::vector<double>> analytic;
  std::vector<int64_t> prefix;  // cumulative numel for weighted probe choice
  int64_t total = 0;
  for (const std::string& name : params.names()) {
    const Tensor t = params.get(name);
    analytic.push_back(t.grad().empty() ? std::vector<double>(t.numel(), 0.0) : t.grad());
    total += t.numel();
    prefix.push_back(total);
  }

  RngStream rng(seed, {0x6d});
  double max_rel = 0.0;
  for (int p = 0; p < probes; ++p) {
    const int64_t flat = static_cast<int64_t>(rng.next_index(total));
    size_t ti = 0;
    while (prefix[ti] <= flat) ++ti;
    const int64_t offset = flat - (ti == 0 ? 0 : prefix[ti - 1]);
    Tensor t = params.get(params.names()[ti]);
    double& slot = t.mutable_value()[offset];
    const double orig = slot;
    slot = orig + eps;
    const double plus = loss_fn().scalar();
    slot = orig - eps;
    const double minus = loss_fn().scalar();
    slot = orig;
    const double fd = (plus - minus) / (2.0 * eps);
    const double g = analytic[ti][offset];
    if (std::abs(fd) < 1e-12 && std::abs(g) < 1e-12) continue;
    const double rel = std::abs(fd - g) / std::max({std::abs(fd), std::abs(g), 1e-8});
    max_rel = std::max(max_rel, rel);
  }
  return max_rel;
}

Adam::Adam(ParameterStore* store, AdamConfig config) : store_(store), config_(config) {
  for (const std::string& name : store_->names()) {
    const int n = store_->get(name).numel();
    m_.emplace_back(n, 0.0);
    v_.emplace_back(n, 0.0);
  }
}

void Adam::step() {
  ATFM_CHECK(!store_->frozen(), "adam: cannot update a frozen parameter store");
  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, t_);
  const double bc2 = 1.0 - std::pow(config_.beta2, t_);
  for (size_t i = 0; i < store_->names().size(); ++i) {
    Tensor t = store_->get(store_->names()[i]);
    const std::vector<double>& grad = t.grad();
    std::vector<double>& value = t.mutable_value();
    std::vector<double>& m = m_[i];
    std::vector<double>& v = v_[i];
    const int n = t.numel();
    for (int k = 0; k < n; ++k) {
      const double g = grad.empty() ? 0.0 : grad[k];
      m[k] = config_.beta1 * m[k] + (1.0 - config_.beta1) * g;
      v[k] = config_.beta2 * v[k] + (1.0 - config_.beta2) * g * g;
      const double mhat = m[k] / bc1;
      const double vhat = v[k] / bc2;
      value[k] -= config_.lr * mhat / (std::sqrt(vhat) + config_.eps);
    }
  }
  store_->set_step(store_->step() + 1);
  store_->check_finite();
}

double gradient_norm(const ParameterStore& store) {
  double acc = 0.0;
  for (const std::string& name : store.names()) {
    const std::vector<double>& g = store.get(name).grad();
    for (double x : g) acc += x * x;
  }
  return std::sqrt(acc);
}

}  // namespace atfm
