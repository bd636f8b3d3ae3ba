#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "latad/common.hpp"
#include "latad/preprocessing.hpp"

namespace latad {

struct DatasetDescriptor {
  std::string name;
  std::size_t expected_train_len = 0;
  std::size_t expected_test_len = 0;
  double expected_anomaly_ratio = 0.0;  // fraction, not percent
  std::size_t expected_feature_count = 0;
};

/// Known benchmarks: SWaT, WADI, MSL, SMAP, SMD.
const std::vector<DatasetDescriptor>& benchmark_descriptors();
std::optional<DatasetDescriptor> find_descriptor(const std::string& name);

/// One statistic that disagrees with the descriptor.
struct LoaderWarning {
  std::string dataset;
  std::string field;
  double expected = 0.0;
  double actual = 0.0;
  std::string message() const;
};

struct LoaderOptions {
  /// SMD machine file stem, e.g. "machine-1-1".
  std::string smd_machine = "machine-1-1";
  /// Absolute tolerance on the anomaly ratio before a warning is raised.
  double ratio_tolerance = 0.005;
};

struct LoadedBenchmark {
  TimeSeriesDataset train;
  TimeSeriesDataset test;
  std::vector<LoaderWarning> warnings;
  std::map<std::string, std::string> metadata;
};

/// Compares observed statistics against the descriptor. Never throws.
std::vector<LoaderWarning> validate_against(const DatasetDescriptor& desc, const TimeSeriesDataset& train,
                                            const TimeSeriesDataset& test, double ratio_tolerance = 0.005);

/// Loads one of the published layouts:
///   SWaT   SWaT_Dataset_Normal_v1.csv, SWaT_Dataset_Attack_v0.csv
///   WADI   WADI_14days.csv, WADI_attackdataLABLE.csv
///   MSL    train/<chan>.npy, test/<chan>.npy, labeled_anomalies.csv
///   SMAP   same as MSL
///   SMD    train/<m>.txt, test/<m>.txt, test_label/<m>.txt
/// Mismatches against the descriptor are logged and returned as warnings.
LoadedBenchmark load_benchmark(const std::string& name, const std::filesystem::path& path,
                               const LoaderOptions& options = {});

std::string expected_layout(const std::string& name);

enum class AnomalyType { point, contextual, collective };

std::string to_string(AnomalyType type);
AnomalyType anomaly_type_from_string(const std::string& s);

struct PlannedAnomaly {
  AnomalyType type = AnomalyType::point;
  std::size_t start = 0;  // index into the test split
  std::size_t length = 1;
  double magnitude = 5.0;  // in units of the feature's training std
  /// Affected features; empty means all.
  std::vector<int> features;
};

struct SynthConfig {
  int features = 5;
  std::size_t train_length = 8000;
  std::size_t test_length = 2000;
  std::vector<double> periods{40.0, 95.0, 230.0};
  std::vector<double> amplitudes{1.0, 0.7, 0.5};
  /// features x sources; empty draws a seeded matrix in [-1, 1].
  Matrix mixing;
  double noise_std = 0.05;
  /// Period of the square wave used for collective anomalies.
  double collective_period = 40.0;
  std::vector<PlannedAnomaly> plan;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SynthData {
  TimeSeriesDataset train;
  TimeSeriesDataset test;
};

SynthData synth_generate(const SynthConfig& config);

/// Two anomalies of each type spread evenly over the test split.
std::vector<PlannedAnomaly> standard_anomaly_plan(std::size_t test_length, int features, std::uint64_t seed);

}  // namespace latad
