#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "latad/checkpoint.hpp"
#include "latad/config.hpp"
#include "latad/datasets.hpp"
#include "latad/diagnosis.hpp"
#include "latad/evaluation.hpp"
#include "latad/preprocessing.hpp"

namespace latad::runner {

std::string toolkit_version();

/// Process exit codes used by the command-line tool.
enum class ExitCode : int {
  ok = 0,
  usage = 1,
  config_error = 2,
  data_error = 3,
  training_failed = 4,
  internal_error = 5,
};

/// Maps an exception to the exit code reported for it.
ExitCode exit_code_for(const std::exception& e);

/// Environment variable holding the default data root.
inline constexpr const char* kDataRootEnv = "LATAD_DATA_ROOT";

/// Absolute paths stay; relative ones resolve against config.data_root, then
/// $LATAD_DATA_ROOT, then the working directory.
std::filesystem::path resolve_data_path(const ExperimentConfig& config, const std::string& path);

struct RawData {
  TimeSeriesDataset train;
  TimeSeriesDataset test;
  std::map<std::string, std::string> metadata;
  std::vector<LoaderWarning> warnings;
};

RawData load_dataset(const ExperimentConfig& config);
SynthConfig resolved_synth_config(const ExperimentConfig& config);

/// Preprocessed splits plus dataset metadata, as stored in a run directory.
struct PreparedData {
  PreprocessedData data;
  std::map<std::string, std::string> metadata;
};

void save_prepared(const std::filesystem::path& dir, const PreparedData& prepared);
PreparedData load_prepared(const std::filesystem::path& dir);
bool has_prepared(const std::filesystem::path& dir);

struct ScoreFile {
  std::vector<double> timestamps;
  std::vector<double> scores;
  Labels predictions;
  std::optional<Labels> labels;
};

void write_scores_csv(const std::filesystem::path& path, const ScoreFile& scores);
ScoreFile read_scores_csv(const std::filesystem::path& path);

/// Loss history as CSV with columns epoch,L_comp,L_sep,L_reg,total.
std::string history_csv(const TrainHistory& history);

/// Every artifact is recorded with its path relative to the run directory and
/// its SHA-256; timings are kept apart so content hashes can ignore them.
class Manifest {
 public:
  /// Loads `dir/manifest.json` when it belongs to the same config, else starts fresh.
  Manifest(std::filesystem::path dir, const ExperimentConfig& config);

  void begin(const std::string& command);
  void add_artifact(const std::string& command, const std::string& name, const std::filesystem::path& file);
  void set_metadata(const std::string& command, const std::string& key, const std::string& value);
  void finish(const std::string& command, double seconds);
  void fail(const std::string& command, const std::string& error, double seconds);
  void write() const;

  std::string text() const;
  /// SHA-256 of the manifest with all timings removed.
  std::string content_hash() const;
  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
  std::string state_;  // serialized JSON document
};

std::string content_hash_of_manifest(const std::string& manifest_json);

// Commands. Each writes into config.output_dir and updates its manifest.

/// Writes the synthetic train/test splits as CSV in the preprocessing input schema.
SynthData cmd_synth(const ExperimentConfig& config);
PreparedData cmd_preprocess(const ExperimentConfig& config);

struct TrainResult {
  Checkpoint checkpoint;
  TrainHistory history;
};
/// Preprocesses first when the run directory holds no preprocessed data.
TrainResult cmd_train(const ExperimentConfig& config);

struct ScoreResult {
  ScoreFile test;
  std::vector<double> validation_scores;
  std::vector<double> test_window_scores;
  double threshold = 0.0;
  std::string threshold_protocol;
};
ScoreResult cmd_score(const ExperimentConfig& config);

struct EvaluateResult {
  std::optional<EvalReport> report;
  std::string report_json;
};
/// Scores first when scores.csv is absent. Without labels only scores are emitted.
EvaluateResult cmd_evaluate(const ExperimentConfig& config);

struct DiagnoseResult {
  RootCauseReport report;
  Eigen::Index window_start = 0;
  double score = 0.0;
  std::string report_json;
};
/// `selector` is "highest-score" or a timestamp; the chosen window is the one
/// whose last row carries that timestamp (the first window for earlier rows).
DiagnoseResult cmd_diagnose(const ExperimentConfig& config, const std::string& selector);

/// JSON document described by schemas/eval_report.schema.json.
std::string eval_report_json(const std::optional<EvalReport>& report, const std::string& dataset,
                             const std::string& config_hash, double anomaly_ratio, std::size_t length);

/// Full synthetic pipeline: synth data, preprocess, train, score, evaluate.
struct PipelineResult {
  TrainResult train;
  ScoreResult score;
  EvaluateResult evaluate;
};
PipelineResult run_pipeline(const ExperimentConfig& config);

}  // namespace latad::runner
