#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "latad/autodiff.hpp"
#include "latad/common.hpp"
#include "latad/evaluation.hpp"
#include "latad/feature_extractor.hpp"

namespace latad {

struct ReferenceOptions {
  int k = 10;
  double coreset_fraction = 0.10;
  int max_iterations = 100;
  std::uint64_t seed = 0;
};

/// K unit-norm cluster centres fitted on a coreset of training features.
struct ReferenceModel {
  Matrix centers;  // K x d_model
  double coreset_fraction = 0.10;

  int k() const { return static_cast<int>(centers.rows()); }
};

struct KMeansTrace {
  /// Sum of cosine similarities to assigned centres after each iteration.
  std::vector<double> objective;
  std::size_t coreset_size = 0;
  bool k_reduced = false;
};

std::size_t coreset_size(std::size_t n, double fraction);

ReferenceModel fit_reference(std::span<const LatentFeature> features, const ReferenceOptions& options,
                             KMeansTrace* trace = nullptr);

/// Spherical K-means on already-selected points (rows), exposed for testing.
Matrix spherical_kmeans(const Matrix& points, int k, int max_iterations, KMeansTrace* trace = nullptr);

/// min_c dist(c, z), divided by ||z|| when `divide_by_norm`.
double anomaly_score(const RowVector& z, const ReferenceModel& ref, bool divide_by_norm = true);
/// Index of the nearest centre (first index on exact ties).
int nearest_center(const RowVector& z, const ReferenceModel& ref);
ad::Var anomaly_score(ad::Var z, const ReferenceModel& ref, bool divide_by_norm = true);

/// y_hat(t) = 1 iff score(t) > threshold.
Labels predict_labels(std::span<const double> scores, double threshold);

struct ThresholdResult {
  double threshold = 0.0;
  double metric_value = 0.0;
  /// No candidate above the validation mean; threshold is that mean.
  bool fallback = false;
};

/// Best-metric threshold over the distinct test scores strictly above
/// mean(validation scores); ties go to the larger threshold.
ThresholdResult search_threshold(std::span<const double> test_scores, const Labels& test_labels,
                                 std::span<const double> validation_scores, const F1Metric& metric);

/// Label-free threshold: the q-quantile of validation scores.
double quantile_threshold(std::span<const double> validation_scores, double q = 0.995);

struct ScoreSeries {
  std::vector<double> scores;
  double threshold = 0.0;
  Labels predictions;
};

/// Scores for windows starting at 0, stride, 2*stride, ..., in start order.
std::vector<double> window_scores(const Matrix& series, const FeatureExtractor& extractor,
                                  const ParameterSet& params, const ReferenceModel& ref,
                                  bool divide_by_norm = true, int stride = 1);

/// Aligns window scores to timestamps: window i scores its last row; the first
/// w - 1 rows take the first window's score. With stride > 1, rows between
/// window ends carry the latest preceding window's score.
std::vector<double> align_window_scores(std::span<const double> per_window, int w, std::size_t length,
                                        int stride = 1);

std::vector<double> score_series(const Matrix& series, const FeatureExtractor& extractor,
                                 const ParameterSet& params, const ReferenceModel& ref,
                                 bool divide_by_norm = true, int stride = 1);

}  // namespace latad
