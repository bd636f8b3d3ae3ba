#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "latad/augmentation.hpp"
#include "latad/datasets.hpp"
#include "latad/evaluation.hpp"
#include "latad/feature_extractor.hpp"
#include "latad/preprocessing.hpp"
#include "latad/training.hpp"

namespace latad {

struct DatasetSpec {
  /// "synthetic", "benchmark" or "csv".
  std::string kind = "synthetic";
  /// Benchmark name (SWaT, WADI, MSL, SMAP, SMD).
  std::string name;
  /// Benchmark directory; relative paths resolve against the data root.
  std::string path;
  std::string train_csv;
  std::string test_csv;
  std::string smd_machine = "machine-1-1";
  SynthConfig synth;
  /// Use standard_anomaly_plan() instead of synth.plan.
  bool standard_plan = true;
};

struct ScoringConfig {
  int k = 10;
  double coreset_fraction = 0.10;
  int max_iterations = 100;
  ThresholdPolicy threshold_policy = ThresholdPolicy::best_f1;
  double quantile = 0.995;
  bool divide_by_norm = true;
};

struct EvaluationConfig {
  double pa_k_percent = 50.0;
};

struct DiagnosisConfig {
  int top_k = 4;
  /// "highest-score" or a timestamp value.
  std::string selector = "highest-score";
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::string output_dir = "runs/latad";
  std::string data_root;
  DatasetSpec dataset;
  PreprocessConfig preprocess;
  ExtractorConfig model;
  /// Generator count, hidden width and slope; window/features follow the data.
  GeneratorConfig generators;
  TrainConfig train;
  ScoringConfig scoring;
  EvaluationConfig evaluation;
  DiagnosisConfig diagnosis;

  void validate() const;
};

ExperimentConfig default_config();

/// Parses YAML on top of the defaults. Unknown keys are rejected.
ExperimentConfig config_from_yaml(const std::string& text);
ExperimentConfig load_config(const std::string& path);
/// Canonical, fully resolved YAML; identical configs give identical text.
std::string config_to_yaml(const ExperimentConfig& config);
/// Canonical YAML without the output location, so the same experiment run in
/// two directories has one identity.
std::string canonical_config_text(const ExperimentConfig& config);
/// SHA-256 of canonical_config_text().
std::string config_hash(const ExperimentConfig& config);

/// Sets a dotted key such as "train.max_epoch" from its YAML scalar text.
void apply_override(ExperimentConfig& config, const std::string& key, const std::string& value);
/// "key=value" form.
void apply_override(ExperimentConfig& config, const std::string& assignment);
/// Applies all assignments, then validates once.
void apply_overrides(ExperimentConfig& config, const std::vector<std::string>& assignments);

std::string to_string(ThresholdPolicy policy);
ThresholdPolicy threshold_policy_from_string(const std::string& s);

/// Copies the top-level seed and data shape into every sub-configuration.
void resolve_seeds(ExperimentConfig& config);

}  // namespace latad
