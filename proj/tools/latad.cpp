#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "latad/config.hpp"
#include "latad/runner.hpp"

namespace {

using latad::ExperimentConfig;
using latad::runner::ExitCode;

struct CommonOptions {
  std::string config_file;
  std::vector<std::string> overrides;
  std::optional<std::string> output;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> data_root;
  std::optional<std::string> dataset;
  std::optional<std::string> data_path;
  std::optional<int> epochs;
  std::optional<int> top_k;
  std::optional<std::string> threshold_policy;
  bool verbose = false;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("-c,--config", o.config_file, "YAML experiment config (defaults when omitted)");
  cmd->add_option("-s,--set", o.overrides, "Override a config key, e.g. --set train.max_epoch=5")->take_all();
  cmd->add_option("-o,--output", o.output, "Run directory (output_dir)");
  cmd->add_option("--seed", o.seed, "Global seed");
  cmd->add_option("--data-root", o.data_root, "Root for relative dataset paths (default: $LATAD_DATA_ROOT)");
  cmd->add_option("--dataset", o.dataset, "'synthetic' or a benchmark name (SWaT, WADI, MSL, SMAP, SMD)");
  cmd->add_option("--data-path", o.data_path, "Benchmark directory, relative to the data root");
  cmd->add_flag("-v,--verbose", o.verbose, "Debug logging");
}

ExperimentConfig resolve(const CommonOptions& o) {
  ExperimentConfig c = o.config_file.empty() ? latad::default_config() : latad::load_config(o.config_file);
  std::vector<std::string> sets = o.overrides;
  if (o.seed) sets.push_back(fmt::format("seed={}", *o.seed));
  if (o.dataset) {
    if (*o.dataset == "synthetic") {
      sets.push_back("dataset.kind=synthetic");
    } else {
      sets.push_back("dataset.kind=benchmark");
      sets.push_back("dataset.name=" + *o.dataset);
    }
  }
  if (o.data_path) sets.push_back("dataset.path=" + *o.data_path);
  if (o.epochs) sets.push_back(fmt::format("train.max_epoch={}", *o.epochs));
  if (o.top_k) sets.push_back(fmt::format("diagnosis.top_k={}", *o.top_k));
  if (o.threshold_policy) sets.push_back("scoring.threshold_policy=" + *o.threshold_policy);
  latad::apply_overrides(c, sets);
  if (o.output) c.output_dir = *o.output;
  if (o.data_root) c.data_root = *o.data_root;
  c.validate();
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LATAD: self-supervised multivariate time-series anomaly detection"};
  app.set_version_flag("--version", latad::runner::toolkit_version());
  app.require_subcommand(1);
  CommonOptions opts;
  std::string selector;

  auto* print_config = app.add_subcommand("print-config", "Print the resolved configuration as YAML");
  auto* synth = app.add_subcommand("synth", "Write a synthetic dataset as train/test CSV");
  auto* preprocess = app.add_subcommand("preprocess", "Load, clean, normalize and split the dataset");
  auto* train = app.add_subcommand("train", "Train the model and fit the reference clusters");
  auto* score = app.add_subcommand("score", "Score validation and test data");
  auto* evaluate = app.add_subcommand("evaluate", "Compute F1, F1_PA%k and F1_PA, and write plots");
  auto* diagnose = app.add_subcommand("diagnose", "Rank root-cause features for one window");
  for (auto* cmd : {print_config, synth, preprocess, train, score, evaluate, diagnose}) add_common(cmd, opts);
  train->add_option("--epochs", opts.epochs, "train.max_epoch");
  evaluate->add_option("--threshold-policy", opts.threshold_policy, "best_f1 or quantile");
  score->add_option("--threshold-policy", opts.threshold_policy, "best_f1 or quantile");
  diagnose->add_option("--window", selector, "'highest-score' or a timestamp (default: diagnosis.selector)");
  diagnose->add_option("--top-k", opts.top_k, "diagnosis.top_k");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ExitCode::usage);
  }
  spdlog::set_level(opts.verbose ? spdlog::level::debug : spdlog::level::info);

  try {
    const ExperimentConfig config = resolve(opts);
    namespace r = latad::runner;
    if (print_config->parsed()) {
      std::cout << latad::config_to_yaml(config);
    } else if (synth->parsed()) {
      r::cmd_synth(config);
      fmt::print("wrote {}/synth/train.csv and test.csv\n", config.output_dir);
    } else if (preprocess->parsed()) {
      const auto p = r::cmd_preprocess(config);
      fmt::print("preprocessed: train {} x {}, validation {}, test {}\n", p.data.train.length(),
                 p.data.train.feature_count(), p.data.validation.length(), p.data.test.length());
    } else if (train->parsed()) {
      const auto t = r::cmd_train(config);
      fmt::print("trained {} epochs; checkpoint {}/model.ckpt\n", t.history.epochs.size(), config.output_dir);
    } else if (score->parsed()) {
      const auto s = r::cmd_score(config);
      fmt::print("scored {} test rows; threshold {:.6g} ({})\n", s.test.scores.size(), s.threshold,
                 s.threshold_protocol);
    } else if (evaluate->parsed()) {
      const auto e = r::cmd_evaluate(config);
      if (e.report) {
        fmt::print("F1 {:.4f}  {} {:.4f}  F1_PA {:.4f}\n", e.report->f1.f1, e.report->f1_pa_k.name,
                   e.report->f1_pa_k.f1, e.report->f1_pa.f1);
      } else {
        fmt::print("no labels: metrics skipped, scores written\n");
      }
    } else if (diagnose->parsed()) {
      const auto d = r::cmd_diagnose(config, selector.empty() ? config.diagnosis.selector : selector);
      fmt::print("window starting at row {} (score {:.6g})\n", d.window_start, d.score);
      for (std::size_t i = 0; i < d.report.ranking.size(); ++i) {
        fmt::print("{:>3}. feature {:<4} count {}\n", i + 1, d.report.ranking[i].feature, d.report.ranking[i].count);
      }
    }
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return static_cast<int>(latad::runner::exit_code_for(e));
  }
  return 0;
}
