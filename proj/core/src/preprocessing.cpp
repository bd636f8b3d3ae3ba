#include "latad/preprocessing.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

namespace latad {

std::string to_string(SplitRole role) {
  switch (role) {
    case SplitRole::train:
      return "train";
    case SplitRole::validation:
      return "validation";
    case SplitRole::test:
      return "test";
  }
  return "unknown";
}

void TimeSeriesDataset::validate() const {
  const auto n = static_cast<std::size_t>(values.rows());
  if (timestamps.size() != n) {
    throw DataError(fmt::format("{} timestamps for {} rows", timestamps.size(), n));
  }
  for (std::size_t t = 1; t < timestamps.size(); ++t) {
    if (!(timestamps[t] > timestamps[t - 1])) {
      throw DataError(fmt::format("timestamps not strictly increasing at row {}", t));
    }
  }
  if (labels) {
    if (labels->size() != n) throw DataError(fmt::format("{} labels for {} rows", labels->size(), n));
    for (std::size_t t = 0; t < n; ++t) {
      if ((*labels)[t] > 1) throw DataError(fmt::format("label at row {} is not 0/1", t));
    }
  }
  if (!feature_names.empty() && feature_names.size() != static_cast<std::size_t>(values.cols())) {
    throw DataError(fmt::format("{} feature names for {} columns", feature_names.size(), values.cols()));
  }
}

NormalizationStats NormalizationStats::from_train(const Matrix& train) {
  if (train.rows() == 0) throw DataError("cannot compute normalization stats of an empty split");
  return {train.colwise().minCoeff(), train.colwise().maxCoeff()};
}

namespace prep {

namespace {

// Fills NaN entries of one column in place; returns false if none are valid.
bool interpolate_column(Eigen::Ref<Vector> col) {
  const Eigen::Index n = col.size();
  Eigen::Index prev = -1;
  for (Eigen::Index t = 0; t < n; ++t) {
    if (!std::isfinite(col(t))) continue;
    if (prev < 0) {
      for (Eigen::Index s = 0; s < t; ++s) col(s) = col(t);
    } else if (t - prev > 1) {
      const double a = col(prev);
      const double b = col(t);
      const double span = static_cast<double>(t - prev);
      for (Eigen::Index s = prev + 1; s < t; ++s) {
        col(s) = a + (b - a) * static_cast<double>(s - prev) / span;
      }
    }
    prev = t;
  }
  if (prev < 0) return false;
  for (Eigen::Index s = prev + 1; s < n; ++s) col(s) = col(prev);
  return true;
}

}  // namespace

Matrix fill_missing(const Matrix& raw, const std::vector<std::string>& feature_names) {
  Matrix out = raw;
  for (Eigen::Index j = 0; j < out.cols(); ++j) {
    Vector col = out.col(j);
    if (!interpolate_column(col)) {
      const std::string name = static_cast<std::size_t>(j) < feature_names.size()
                                   ? feature_names[static_cast<std::size_t>(j)]
                                   : fmt::format("#{}", j);
      throw DataError(fmt::format("column {} has no valid values", name));
    }
    out.col(j) = col;
  }
  return out;
}

Matrix downsample(const Matrix& series, int k) {
  if (k <= 0) throw ConfigError(fmt::format("downsample factor must be positive, got {}", k));
  const Eigen::Index blocks = series.rows() / k;
  Matrix out(blocks, series.cols());
  for (Eigen::Index j = 0; j < blocks; ++j) {
    out.row(j) = series.middleRows(j * k, k).colwise().mean();
  }
  return out;
}

Labels downsample_labels(const Labels& labels, int k) {
  if (k <= 0) throw ConfigError(fmt::format("downsample factor must be positive, got {}", k));
  const std::size_t blocks = labels.size() / static_cast<std::size_t>(k);
  Labels out(blocks, 0);
  for (std::size_t j = 0; j < blocks; ++j) {
    for (std::size_t s = 0; s < static_cast<std::size_t>(k); ++s) {
      out[j] = std::max(out[j], labels[j * static_cast<std::size_t>(k) + s]);
    }
  }
  return out;
}

std::vector<double> downsample_timestamps(const std::vector<double>& timestamps, int k) {
  if (k <= 0) throw ConfigError(fmt::format("downsample factor must be positive, got {}", k));
  const std::size_t blocks = timestamps.size() / static_cast<std::size_t>(k);
  std::vector<double> out(blocks);
  for (std::size_t j = 0; j < blocks; ++j) out[j] = timestamps[j * static_cast<std::size_t>(k)];
  return out;
}

Matrix minmax_normalize(const Matrix& series, const NormalizationStats& stats) {
  if (stats.train_min.size() != series.cols() || stats.train_max.size() != series.cols()) {
    throw ShapeError("normalization stats do not match feature count");
  }
  Matrix out(series.rows(), series.cols());
  for (Eigen::Index j = 0; j < series.cols(); ++j) {
    const double lo = stats.train_min(j);
    const double range = stats.train_max(j) - lo;
    if (range == 0.0) {
      out.col(j).setZero();
    } else {
      out.col(j) = (series.col(j).array() - lo) / range;
    }
  }
  return out;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw DataError("quantile of empty sample");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

Matrix iqr_filter(const Matrix& series, double fence) {
  if (series.rows() < 4) throw ShapeError("iqr_filter needs at least 4 rows per column");
  Matrix out = series;
  for (Eigen::Index j = 0; j < series.cols(); ++j) {
    std::vector<double> col(series.col(j).data(), series.col(j).data() + series.rows());
    const double q1 = quantile(col, 0.25);
    const double q3 = quantile(col, 0.75);
    const double iqr = q3 - q1;
    const double lo = q1 - fence * iqr;
    const double hi = q3 + fence * iqr;
    Vector filtered = series.col(j);
    for (Eigen::Index t = 0; t < filtered.size(); ++t) {
      if (filtered(t) < lo || filtered(t) > hi) filtered(t) = std::nan("");
    }
    // Q1 and Q3 always lie inside the fences, so at least one point survives.
    interpolate_column(filtered);
    out.col(j) = filtered;
  }
  return out;
}

std::size_t window_count(Eigen::Index length, int w, int stride) {
  if (w < 1 || stride < 1) throw ConfigError("window length and stride must be positive");
  if (w > length) return 0;
  return static_cast<std::size_t>((length - w) / stride) + 1;
}

std::vector<Window> make_windows(const Matrix& series, int w, int stride,
                                 const std::optional<Labels>& labels) {
  if (w < 1 || stride < 1) throw ConfigError("window length and stride must be positive");
  if (w > series.rows()) {
    throw ShapeError(fmt::format("window length {} exceeds series length {}", w, series.rows()));
  }
  if (labels && labels->size() != static_cast<std::size_t>(series.rows())) {
    throw ShapeError("labels length does not match series");
  }
  const std::size_t count = window_count(series.rows(), w, stride);
  std::vector<Window> windows;
  windows.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const Eigen::Index start = static_cast<Eigen::Index>(i) * stride;
    Window win{series.middleRows(start, w), start, std::nullopt};
    if (labels) {
      win.label = Labels(labels->begin() + start, labels->begin() + start + w);
    }
    windows.push_back(std::move(win));
  }
  return windows;
}

}  // namespace prep

namespace {

TimeSeriesDataset slice_rows(const TimeSeriesDataset& src, Eigen::Index start, Eigen::Index count,
                             SplitRole role) {
  TimeSeriesDataset out;
  out.values = src.values.middleRows(start, count);
  out.timestamps.assign(src.timestamps.begin() + start, src.timestamps.begin() + start + count);
  if (src.labels) out.labels = Labels(src.labels->begin() + start, src.labels->begin() + start + count);
  out.role = role;
  out.feature_names = src.feature_names;
  return out;
}

TimeSeriesDataset clean_and_downsample(const TimeSeriesDataset& src, int k) {
  TimeSeriesDataset out;
  out.values = prep::downsample(prep::fill_missing(src.values, src.feature_names), k);
  out.timestamps = prep::downsample_timestamps(src.timestamps, k);
  if (src.labels) out.labels = prep::downsample_labels(*src.labels, k);
  out.role = src.role;
  out.feature_names = src.feature_names;
  return out;
}

}  // namespace

PreprocessedData preprocess(const TimeSeriesDataset& train, const TimeSeriesDataset& test,
                            const PreprocessConfig& config) {
  train.validate();
  test.validate();
  if (train.feature_count() != test.feature_count()) {
    throw DataError(fmt::format("train has {} features, test has {}", train.feature_count(),
                                test.feature_count()));
  }
  if (config.validation_fraction < 0.0 || config.validation_fraction >= 1.0) {
    throw ConfigError("validation_fraction must be in [0, 1)");
  }
  TimeSeriesDataset tr = clean_and_downsample(train, config.downsample);
  TimeSeriesDataset te = clean_and_downsample(test, config.downsample);
  if (tr.length() == 0 || te.length() == 0) throw DataError("a split is empty after downsampling");

  PreprocessedData out;
  out.stats = NormalizationStats::from_train(tr.values);
  tr.values = prep::minmax_normalize(tr.values, out.stats);
  te.values = prep::minmax_normalize(te.values, out.stats);
  if (config.iqr_enabled) tr.values = prep::iqr_filter(tr.values, config.iqr_fence);

  const auto val_rows =
      static_cast<Eigen::Index>(std::floor(static_cast<double>(tr.length()) * config.validation_fraction));
  out.train = slice_rows(tr, 0, tr.length() - val_rows, SplitRole::train);
  out.validation = slice_rows(tr, tr.length() - val_rows, val_rows, SplitRole::validation);
  out.test = std::move(te);
  out.test.role = SplitRole::test;
  return out;
}

}  // namespace latad
