#pragma once

#include <vector>

#include "latad/common.hpp"
#include "latad/feature_extractor.hpp"
#include "latad/scoring.hpp"

namespace latad {

struct GradientMap {
  Matrix g;       // dA/dx, w x d
  Matrix g_norm;  // per-feature standardized
};

struct RootCause {
  int feature = 0;
  std::size_t count = 0;
};

struct RootCauseReport {
  /// Top features by appearance count, count ties broken by lowest index.
  std::vector<RootCause> ranking;
  /// Appearance count of every feature; sums to w.
  std::vector<std::size_t> counts;
  /// argmax_i |g_norm(t, i)| for each timestep.
  std::vector<int> per_timestep;
  int top_k = 4;
  Eigen::Index window_start = 0;
};

/// Reverse-mode gradient of the anomaly score with respect to the input window.
Matrix score_input_gradient(const Matrix& x, const FeatureExtractor& extractor, const ParameterSet& params,
                            const ReferenceModel& ref, bool divide_by_norm = true);

/// (g - mean) / population std per column; zero-variance columns become zeros.
Matrix normalize_gradients(const Matrix& g);

GradientMap input_gradients(const Matrix& x, const FeatureExtractor& extractor, const ParameterSet& params,
                            const ReferenceModel& ref, bool divide_by_norm = true);

RootCauseReport root_causes(const Matrix& g_norm, int top_k);

}  // namespace latad
