// cli.cpp

// Copyright 2026  ATFM authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#include "atfm/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "atfm/errors.hpp"
#include "atfm/gtr_training.hpp"
#include "atfm/metrics.hpp"
#include "atfm/nets.hpp"
#include "atfm/pgm.hpp"
#include "atfm/sfm.hpp"
#include "atfm/synthdata.hpp"
#include "atfm/verify.hpp"

namespace fs = std::filesystem;

namespace atfm {

namespace {

struct RunConfig {
  NetConfig net;
  GtrTrainConfig gtr;
  SfmTrainConfig sfm;
  SynthConfig synth;
};

void check_keys(const nlohmann::json& j, const std::vector<std::string>& known,
                const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw ValidationError(where + ": unknown key '" + key + "'");
  }
}

GtrTrainConfig gtr_config_from_json(const nlohmann::json& j) {
  check_keys(j, {"mc_samples", "epochs", "batch_size", "lr", "mixture_likelihood"}, "gtr config");
  GtrTrainConfig c;
  c.mc_samples = j.value("mc_samples", c.mc_samples);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr = j.value("lr", c.lr);
  c.mixture_likelihood = j.value("mixture_likelihood", c.mixture_likelihood);
  c.validate();
  return c;
}

SfmTrainConfig sfm_config_from_json(const nlohmann::json& j) {
  check_keys(j, {"dice_weight", "epochs", "batch_size", "lr", "euler_steps", "grad_stop"},
             "sfm config");
  SfmTrainConfig c;
  c.dice_weight = j.value("dice_weight", c.dice_weight);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr = j.value("lr", c.lr);
  c.euler_steps = j.value("euler_steps", c.euler_steps);
  c.grad_stop = j.value("grad_stop", c.grad_stop);
  c.validate();
  return c;
}

RunConfig load_run_config(const std::string& path) {
  RunConfig config;
  if (path.empty()) return config;
  std::ifstream in(path);
  if (!in) throw IoError("config: cannot open: " + path);
  nlohmann::json j = nlohmann::json::parse(in, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) throw ValidationError("config: invalid JSON in " + path);
  check_keys(j, {"net", "gtr", "sfm", "synth"}, "config");
  if (j.contains("net")) config.net = NetConfig::from_json_text(j["net"].dump());
  if (j.contains("gtr")) config.gtr = gtr_config_from_json(j["gtr"]);
  if (j.contains("sfm")) config.sfm = sfm_config_from_json(j["sfm"]);
  if (j.contains("synth")) config.synth = SynthConfig::from_json_text(j["synth"].dump());
  return config;
}

void write_loss_csv(const std::string& path, const std::vector<EpochLog>& log) {
  std::ofstream out(path);
  if (!out) throw IoError("loss log: cannot open for writing: " + path);
  char line[160];
  for (const EpochLog& e : log) {
    std::snprintf(line, sizeof(line), "%d,%.17g,%.17g,%.3f\n", e.epoch, e.mean_loss, e.grad_norm,
                  e.wall_seconds);
    out << line;
  }
}

std::vector<int> parse_widths(const std::string& text) {
  std::vector<int> widths;
  size_t pos = 0;
  while (pos < text.size()) {
    size_t comma = text.find(',', pos);
    if (comma == std::string::npos) comma = text.size();
    try {
      widths.push_back(std::stoi(text.substr(pos, comma - pos)));
    } catch (const std::exception&) {
      throw ValidationError("widths: expected a comma-separated list of integers");
    }
    pos = comma + 1;
  }
  ATFM_CHECK(!widths.empty(), "widths: list is empty");
  return widths;
}

int dataset_size(const std::vector<AnnotatedSample>& samples) {
  return samples.empty() ? 0 : samples[0].image.h;
}

struct EvalAccumulator {
  std::vector<double> values;
  double mean() const {
    double s = 0.0;
    for (double v : values) s += v;
    return s / values.size();
  }
  double stddev() const {
    if (values.size() < 2) return 0.0;
    const double m = mean();
    double s = 0.0;
    for (double v : values) s += (v - m) * (v - m);
    return std::sqrt(s / (values.size() - 1));
  }
  nlohmann::json to_json() const {
    return {{"mean", mean()}, {"std", stddev()}, {"per_run", values}};
  }
};

int cmd_gen_data(const std::string& out_dir, const RunConfig& base, int count, int size,
                 uint64_t seed, const std::optional<int>& annotators,
                 const std::optional<double>& empty_prob) {
  SynthConfig config = base.synth;
  config.count = count;
  config.size = size;
  config.seed = seed;
  if (annotators) config.annotators = *annotators;
  if (empty_prob) config.empty_prob = *empty_prob;
  config.validate();
  const std::vector<AnnotatedSample> samples = generate_dataset(config);
  save_dataset(samples, out_dir, config);
  std::cout << "dataset: " << out_dir << " count=" << config.count << " size=" << config.size
            << " raters=" << config.annotators << " seed=" << config.seed << "\n";
  return 0;
}

int cmd_train_gtr(const std::string& data_dir, const std::string& out_path,
                  const std::string& log_path, RunConfig config, uint64_t seed) {
  const std::vector<AnnotatedSample> dataset = load_dataset(data_dir);
  ATFM_CHECK(!dataset.empty(), "train-gtr: dataset is empty");
  config.net.image_size = dataset_size(dataset);
  config.net.validate();
  config.gtr.seed = seed;

  std::vector<EpochLog> log;
  ParameterStore params = train_gtr(dataset, config.gtr, config.net, &log);
  params.save(out_path);
  write_loss_csv(log_path.empty() ? out_path + ".loss.csv" : log_path, log);
  std::cout << "gtr checkpoint: " << out_path << " params=" << params.param_count()
            << " final_loss=" << log.back().mean_loss << "\n";
  return 0;
}

int cmd_train_sfm(const std::string& data_dir, const std::string& gtr_path,
                  const std::string& out_path, const std::string& log_path, RunConfig config,
                  uint64_t seed) {
  const std::vector<AnnotatedSample> dataset = load_dataset(data_dir);
  ATFM_CHECK(!dataset.empty(), "train-sfm: dataset is empty");
  ParameterStore gtr = ParameterStore::load(gtr_path);
  ATFM_CHECK(gtr.kind() == "gtr", "train-sfm: --gtr checkpoint is not a gtr checkpoint");
  ATFM_CHECK(gtr.frozen(), "train-sfm: --gtr checkpoint is not frozen");
  config.net.image_size = dataset_size(dataset);
  config.net.validate();
  config.sfm.seed = seed;

  std::vector<EpochLog> log;
  ParameterStore params = train_sfm(dataset, gtr, config.sfm, config.net, &log);
  params.save(out_path);
  write_loss_csv(log_path.empty() ? out_path + ".loss.csv" : log_path, log);
  std::cout << "stnet checkpoint: " << out_path << " params=" << params.param_count()
            << " final_loss=" << log.back().mean_loss << "\n";
  return 0;
}

int cmd_sample(const std::string& image_path, const std::string& gtr_path,
               const std::string& sfm_path, int n, int steps, uint64_t seed,
               const std::string& out_dir) {
  const Grid image = read_pgm_grid(image_path);
  ParameterStore gtr = ParameterStore::load(gtr_path);
  std::optional<ParameterStore> stnet;
  if (sfm_path != "none") stnet = ParameterStore::load(sfm_path);

  const std::vector<Mask> masks =
      predict(gtr, stnet ? &*stnet : nullptr, image, n, steps, seed);

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("sample: cannot create output directory: " + out_dir);
  nlohmann::json manifest;
  manifest["image"] = image_path;
  manifest["gtr"] = gtr_path;
  manifest["sfm"] = sfm_path;
  manifest["n"] = n;
  manifest["steps"] = steps;
  manifest["seed"] = seed;
  nlohmann::json files = nlohmann::json::array();
  for (int i = 0; i < n; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "pred_%03d.pgm", i);
    write_pgm((fs::path(out_dir) / name).string(), masks[i]);
    files.push_back(name);
  }
  manifest["masks"] = files;
  std::ofstream out(fs::path(out_dir) / "predictions.json");
  if (!out) throw IoError("sample: cannot write predictions manifest in " + out_dir);
  out << manifest.dump(2) << "\n";
  std::cout << "predictions: " << out_dir << " n=" << n << " steps=" << steps << "\n";
  return 0;
}

int cmd_eval(const std::string& data_dir, const std::string& gtr_path, const std::string& sfm_path,
             int n, int runs, int steps, uint64_t seed, const std::string& out_path) {
  ATFM_CHECK(n >= 1, "eval: --n must be >= 1");
  ATFM_CHECK(runs >= 1, "eval: --runs must be >= 1");
  const std::vector<AnnotatedSample> dataset = load_dataset(data_dir);
  ParameterStore gtr = ParameterStore::load(gtr_path);
  std::optional<ParameterStore> stnet;
  if (sfm_path != "none") stnet = ParameterStore::load(sfm_path);

  EvalAccumulator ged_acc, hm_acc, mdm_acc;
  nlohmann::json reports = nlohmann::json::array();
  for (int run = 0; run < runs; ++run) {
    MetricsReport report;
    report.n_predictions = n;
    report.n_ground_truths = static_cast<int>(dataset[0].masks.size());
    report.seed = RngStream::derive_seed(seed, {0xEE, static_cast<uint64_t>(run)});
    double ged_sum = 0.0, hm_sum = 0.0, mdm_sum = 0.0;
    for (size_t si = 0; si < dataset.size(); ++si) {
      const AnnotatedSample& sample = dataset[si];
      const uint64_t sample_seed =
          RngStream::derive_seed(seed, {0xEE, static_cast<uint64_t>(run), si});
      const std::vector<Mask> preds =
          predict(gtr, stnet ? &*stnet : nullptr, sample.image, n, steps, sample_seed);
      SampleMetrics sm;
      sm.id = sample.id;
      sm.ged = ged(preds, sample.masks);
      sm.hm_iou = hm_iou(preds, sample.masks);
      sm.mdm = mdm(preds, sample.masks);
      ged_sum += sm.ged;
      hm_sum += sm.hm_iou;
      mdm_sum += sm.mdm;
      report.per_sample.push_back(sm);
    }
    report.ged = ged_sum / dataset.size();
    report.hm_iou = hm_sum / dataset.size();
    report.mdm = mdm_sum / dataset.size();
    ged_acc.values.push_back(report.ged);
    hm_acc.values.push_back(report.hm_iou);
    mdm_acc.values.push_back(report.mdm);
    reports.push_back(nlohmann::json::parse(report.to_json()));
  }

  nlohmann::json out;
  out["data"] = data_dir;
  out["gtr"] = gtr_path;
  out["sfm"] = sfm_path;
  out["n"] = n;
  out["runs"] = runs;
  out["euler_steps"] = steps;
  out["seed"] = seed;
  out["metrics"] = {{"ged", ged_acc.to_json()}, {"hm_iou", hm_acc.to_json()},
                    {"mdm", mdm_acc.to_json()}};
  out["reports"] = reports;
  const std::string text = out.dump(2) + "\n";
  if (out_path.empty()) {
    std::cout << text;
  } else {
    std::ofstream f(out_path);
    if (!f) throw IoError("eval: cannot write report: " + out_path);
    f << text;
    std::cout << "report: " << out_path << " ged=" << ged_acc.mean()
              << " hm_iou=" << hm_acc.mean() << " mdm=" << mdm_acc.mean() << "\n";
  }
  return 0;
}

int cmd_verify(const std::string& suite, uint64_t seed, bool break_cholesky) {
  std::vector<CheckResult> results;
  if (suite == "theorems" || suite == "all") {
    const auto r = verify_theorems(seed, break_cholesky);
    results.insert(results.end(), r.begin(), r.end());
  }
  if (suite == "algebra" || suite == "all") {
    const auto r = verify_algebra(seed);
    results.insert(results.end(), r.begin(), r.end());
  }
  ATFM_CHECK(!results.empty(), "verify: unknown suite '" + suite + "'");
  bool all_pass = true;
  for (const CheckResult& r : results) {
    std::cout << (r.pass ? "PASS" : "FAIL") << "  " << r.name << "  (" << r.detail << ")\n";
    all_pass = all_pass && r.pass;
  }
  return all_pass ? 0 : 2;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"truncated flow matching for ambiguous binary segmentation"};
  app.require_subcommand(1);
  app.fallthrough();  // app-level options (--config, net overrides) may follow the subcommand

  std::string config_path;
  app.add_option("--config", config_path, "JSON config file (net/gtr/sfm/synth sections)");

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic multi-annotator dataset");
  std::string gen_out;
  int gen_count = 200, gen_size = 32;
  uint64_t gen_seed = 0;
  std::optional<int> gen_annotators;
  std::optional<double> gen_empty_prob;
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--count", gen_count, "number of samples");
  gen->add_option("--size", gen_size, "image size (H = W)");
  gen->add_option("--seed", gen_seed, "master seed")->required();
  gen->add_option("--annotators", gen_annotators, "raters per sample");
  gen->add_option("--empty-prob", gen_empty_prob, "per-rater empty-mask probability");

  // shared net overrides
  std::string widths_text;
  int rank = -1, time_dim = -1;
  double logit_c = -1.0;
  app.add_option("--widths", widths_text, "channel widths, comma-separated");
  app.add_option("--rank", rank, "low-rank factor width r");
  app.add_option("--time-dim", time_dim, "time embedding width");
  app.add_option("--logit-c", logit_c, "mask logit encoding magnitude");

  // train-gtr
  auto* tg = app.add_subcommand("train-gtr", "train the truncation distribution network");
  std::string tg_data, tg_out, tg_log;
  uint64_t tg_seed = 0;
  int tg_epochs = -1, tg_mc = -1, tg_batch = -1;
  double tg_lr = -1.0;
  tg->add_option("--data", tg_data, "dataset directory")->required();
  tg->add_option("--out", tg_out, "checkpoint output path")->required();
  tg->add_option("--seed", tg_seed, "master seed")->required();
  tg->add_option("--epochs", tg_epochs, "training epochs");
  tg->add_option("--mc-samples", tg_mc, "Monte-Carlo samples M");
  tg->add_option("--batch", tg_batch, "batch size");
  tg->add_option("--lr", tg_lr, "learning rate");
  tg->add_option("--log", tg_log, "loss CSV path (default <out>.loss.csv)");

  // train-sfm
  auto* ts = app.add_subcommand("train-sfm", "train the velocity field against a frozen stage 1");
  std::string ts_data, ts_gtr, ts_out, ts_log;
  uint64_t ts_seed = 0;
  int ts_epochs = -1, ts_batch = -1, ts_steps = -1;
  double ts_lr = -1.0, ts_alpha = -1.0, ts_grad_stop = -1.0;
  ts->add_option("--data", ts_data, "dataset directory")->required();
  ts->add_option("--gtr", ts_gtr, "frozen stage-1 checkpoint")->required();
  ts->add_option("--out", ts_out, "checkpoint output path")->required();
  ts->add_option("--seed", ts_seed, "master seed")->required();
  ts->add_option("--epochs", ts_epochs, "training epochs");
  ts->add_option("--alpha", ts_alpha, "Dice consistency weight");
  ts->add_option("--batch", ts_batch, "batch size");
  ts->add_option("--lr", ts_lr, "learning rate");
  ts->add_option("--steps", ts_steps, "Euler steps K (stored in config)");
  ts->add_option("--grad-stop", ts_grad_stop, "gradient-norm early stop delta");
  ts->add_option("--log", ts_log, "loss CSV path (default <out>.loss.csv)");

  // sample
  auto* sp = app.add_subcommand("sample", "draw prediction masks for one image");
  std::string sp_image, sp_gtr, sp_sfm, sp_out;
  int sp_n = 16, sp_steps = 25;
  uint64_t sp_seed = 0;
  sp->add_option("--image", sp_image, "input image (PGM)")->required();
  sp->add_option("--gtr", sp_gtr, "stage-1 checkpoint")->required();
  sp->add_option("--sfm", sp_sfm, "stage-2 checkpoint, or 'none' for stage-1 only")->required();
  sp->add_option("--n", sp_n, "number of predictions");
  sp->add_option("--steps", sp_steps, "Euler steps K");
  sp->add_option("--seed", sp_seed, "master seed")->required();
  sp->add_option("--out", sp_out, "output directory")->required();

  // eval
  auto* ev = app.add_subcommand("eval", "evaluate GED/HM-IoU/MDM on a dataset");
  std::string ev_data, ev_gtr, ev_sfm, ev_out;
  int ev_n = 16, ev_runs = 5, ev_steps = 25;
  uint64_t ev_seed = 0;
  ev->add_option("--data", ev_data, "dataset directory")->required();
  ev->add_option("--gtr", ev_gtr, "stage-1 checkpoint")->required();
  ev->add_option("--sfm", ev_sfm, "stage-2 checkpoint, or 'none'")->required();
  ev->add_option("--n", ev_n, "predictions per sample");
  ev->add_option("--runs", ev_runs, "independent evaluation runs");
  ev->add_option("--steps", ev_steps, "Euler steps K");
  ev->add_option("--seed", ev_seed, "master seed")->required();
  ev->add_option("--out", ev_out, "report JSON path (default stdout)");

  // verify
  auto* vf = app.add_subcommand("verify", "run numerical witness suites");
  std::string vf_suite = "all";
  uint64_t vf_seed = 0;
  bool vf_break = false;
  vf->add_option("--suite", vf_suite, "theorems|algebra|all");
  vf->add_option("--seed", vf_seed, "suite seed");
  vf->add_flag("--break-cholesky", vf_break, "inject an indefinite covariance (test hook)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(std::move(reversed));
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    RunConfig config = load_run_config(config_path);
    if (!widths_text.empty()) config.net.widths = parse_widths(widths_text);
    if (rank > 0) config.net.rank = rank;
    if (time_dim > 0) config.net.time_dim = time_dim;
    if (logit_c > 0.0) config.net.logit_c = logit_c;

    if (gen->parsed())
      return cmd_gen_data(gen_out, config, gen_count, gen_size, gen_seed, gen_annotators,
                          gen_empty_prob);
    if (tg->parsed()) {
      if (tg_epochs > 0) config.gtr.epochs = tg_epochs;
      if (tg_mc > 0) config.gtr.mc_samples = tg_mc;
      if (tg_batch > 0) config.gtr.batch_size = tg_batch;
      if (tg_lr > 0.0) config.gtr.lr = tg_lr;
      return cmd_train_gtr(tg_data, tg_out, tg_log, config, tg_seed);
    }
    if (ts->parsed()) {
      if (ts_epochs > 0) config.sfm.epochs = ts_epochs;
      if (ts_alpha >= 0.0) config.sfm.dice_weight = ts_alpha;
      if (ts_batch > 0) config.sfm.batch_size = ts_batch;
      if (ts_lr > 0.0) config.sfm.lr = ts_lr;
      if (ts_steps > 0) config.sfm.euler_steps = ts_steps;
      if (ts_grad_stop >= 0.0) config.sfm.grad_stop = ts_grad_stop;
      return cmd_train_sfm(ts_data, ts_gtr, ts_out, ts_log, config, ts_seed);
    }
    if (sp->parsed()) return cmd_sample(sp_image, sp_gtr, sp_sfm, sp_n, sp_steps, sp_seed, sp_out);
    if (ev->parsed())
      return cmd_eval(ev_data, ev_gtr, ev_sfm, ev_n, ev_runs, ev_steps, ev_seed, ev_out);
    if (vf->parsed()) return cmd_verify(vf_suite, vf_seed, vf_break);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 3;
  }
  return 1;
}

}  // namespace atfm
