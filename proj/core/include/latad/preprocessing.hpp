#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "latad/common.hpp"

namespace latad {

enum class SplitRole { train, validation, test };

std::string to_string(SplitRole role);

/// Multivariate series: values(t, i) is feature i at timestamp t.
struct TimeSeriesDataset {
  Matrix values;
  std::vector<double> timestamps;
  std::optional<Labels> labels;
  SplitRole role = SplitRole::train;
  std::vector<std::string> feature_names;

  Eigen::Index length() const { return values.rows(); }
  Eigen::Index feature_count() const { return values.cols(); }

  /// Throws DataError if timestamps, labels or names disagree with values.
  void validate() const;
};

struct NormalizationStats {
  RowVector train_min;
  RowVector train_max;

  static NormalizationStats from_train(const Matrix& train);
};

struct Window {
  Matrix data;
  Eigen::Index start_index = 0;
  std::optional<Labels> label;
};

namespace prep {

/// Replaces non-finite entries by linear interpolation between the nearest
/// valid neighbours; leading and trailing gaps take the nearest valid value.
Matrix fill_missing(const Matrix& raw, const std::vector<std::string>& feature_names = {});

/// Row j is the mean of rows j*k .. j*k+k-1; a trailing partial block is dropped.
Matrix downsample(const Matrix& series, int k);
/// Block label is 1 when any timestamp in the block is anomalous.
Labels downsample_labels(const Labels& labels, int k);
std::vector<double> downsample_timestamps(const std::vector<double>& timestamps, int k);

/// Constant training columns map to 0.
Matrix minmax_normalize(const Matrix& series, const NormalizationStats& stats);

/// Linear interpolation between order statistics (the "type 7" estimator).
double quantile(std::vector<double> values, double q);

/// Removes points outside [Q1 - fence*IQR, Q3 + fence*IQR] per column and
/// refills them from surviving neighbours.
Matrix iqr_filter(const Matrix& series, double fence = 1.5);

std::size_t window_count(Eigen::Index length, int w, int stride);
std::vector<Window> make_windows(const Matrix& series, int w, int stride,
                                 const std::optional<Labels>& labels = std::nullopt);

}  // namespace prep

struct PreprocessConfig {
  int downsample = 5;
  int window = 100;
  int train_stride = 10;
  int score_stride = 1;
  double iqr_fence = 1.5;
  bool iqr_enabled = true;
  /// Tail fraction of the training split held out for threshold calibration.
  double validation_fraction = 0.1;
};

/// Output of the full preprocessing chain: normalized matrices ready for windowing.
struct PreprocessedData {
  TimeSeriesDataset train;
  TimeSeriesDataset validation;
  TimeSeriesDataset test;
  NormalizationStats stats;
};

/// fill -> downsample -> min-max (train stats) -> IQR (train only), then the
/// training tail is split off as validation.
PreprocessedData preprocess(const TimeSeriesDataset& train, const TimeSeriesDataset& test,
                            const PreprocessConfig& config);

}  // namespace latad
