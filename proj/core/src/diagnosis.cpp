#include "latad/diagnosis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

namespace latad {

Matrix score_input_gradient(const Matrix& x, const FeatureExtractor& extractor, const ParameterSet& params,
                            const ReferenceModel& ref, bool divide_by_norm) {
  ad::Tape tape(false);
  ad::Var input = tape.variable(x);
  ad::Var score = anomaly_score(extractor.forward(tape, params, input), ref, divide_by_norm);
  tape.backward(score);
  return tape.grad(input);
}

Matrix normalize_gradients(const Matrix& g) {
  Matrix out(g.rows(), g.cols());
  for (Eigen::Index j = 0; j < g.cols(); ++j) {
    const double mu = g.col(j).mean();
    const double sigma = std::sqrt((g.col(j).array() - mu).square().mean());
    if (sigma == 0.0 || !std::isfinite(sigma)) {
      out.col(j).setZero();
    } else {
      out.col(j) = (g.col(j).array() - mu) / sigma;
    }
  }
  return out;
}

GradientMap input_gradients(const Matrix& x, const FeatureExtractor& extractor, const ParameterSet& params,
                            const ReferenceModel& ref, bool divide_by_norm) {
  GradientMap map;
  map.g = score_input_gradient(x, extractor, params, ref, divide_by_norm);
  map.g_norm = normalize_gradients(map.g);
  return map;
}

RootCauseReport root_causes(const Matrix& g_norm, int top_k) {
  const auto d = static_cast<int>(g_norm.cols());
  if (top_k < 1 || top_k > d) throw ConfigError(fmt::format("top_k must be in [1, {}], got {}", d, top_k));
  RootCauseReport report;
  report.top_k = top_k;
  report.counts.assign(static_cast<std::size_t>(d), 0);
  for (Eigen::Index t = 0; t < g_norm.rows(); ++t) {
    Eigen::Index best = 0;
    g_norm.row(t).cwiseAbs().maxCoeff(&best);  // first (lowest) index on ties
    report.per_timestep.push_back(static_cast<int>(best));
    ++report.counts[static_cast<std::size_t>(best)];
  }
  std::vector<int> order(static_cast<std::size_t>(d));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return report.counts[static_cast<std::size_t>(a)] > report.counts[static_cast<std::size_t>(b)];
  });
  for (int f : order) {
    if (static_cast<int>(report.ranking.size()) == top_k) break;
    report.ranking.push_back({f, report.counts[static_cast<std::size_t>(f)]});
  }
  return report;
}

}  // namespace latad
