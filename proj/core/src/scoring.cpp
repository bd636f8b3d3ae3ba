#include "latad/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "latad/preprocessing.hpp"

namespace latad {

std::size_t coreset_size(std::size_t n, double fraction) {
  if (fraction <= 0.0 || fraction > 1.0) throw ConfigError("coreset fraction must be in (0, 1]");
  return static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-12));
}

Matrix spherical_kmeans(const Matrix& points, int k, int max_iterations, KMeansTrace* trace) {
  const Eigen::Index n = points.rows();
  if (k < 1 || k > n) throw ConfigError(fmt::format("cannot fit {} centres to {} points", k, n));
  Matrix unit = points;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double norm = unit.row(i).norm();
    if (norm == 0.0) throw DataError("zero latent feature cannot be clustered by cosine similarity");
    unit.row(i) /= norm;
  }
  Matrix centers = unit.topRows(k);
  std::vector<int> assign(static_cast<std::size_t>(n), -1);
  for (int iter = 0; iter < max_iterations; ++iter) {
    const Matrix sims = unit * centers.transpose();
    bool changed = false;
    double objective = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index best = 0;
      sims.row(i).maxCoeff(&best);  // first index on ties
      objective += sims(i, best);
      if (assign[static_cast<std::size_t>(i)] != static_cast<int>(best)) changed = true;
      assign[static_cast<std::size_t>(i)] = static_cast<int>(best);
    }
    if (trace != nullptr) trace->objective.push_back(objective);
    if (!changed && iter > 0) break;
    Matrix sums = Matrix::Zero(k, points.cols());
    for (Eigen::Index i = 0; i < n; ++i) sums.row(assign[static_cast<std::size_t>(i)]) += unit.row(i);
    for (int c = 0; c < k; ++c) {
      const double norm = sums.row(c).norm();
      if (norm > 0.0) centers.row(c) = sums.row(c) / norm;  // empty cluster keeps its centre
    }
  }
  return centers;
}

ReferenceModel fit_reference(std::span<const LatentFeature> features, const ReferenceOptions& options,
                             KMeansTrace* trace) {
  if (features.empty()) throw DataError("no training features to fit the reference model");
  if (options.k < 1) throw ConfigError("K must be >= 1");
  const std::size_t m = std::max<std::size_t>(1, coreset_size(features.size(), options.coreset_fraction));
  std::vector<std::size_t> idx(features.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(options.seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(m);

  int k = options.k;
  if (static_cast<std::size_t>(k) > m) {
    spdlog::warn("coreset has {} points, reducing K from {} to {}", m, k, m);
    k = static_cast<int>(m);
    if (trace != nullptr) trace->k_reduced = true;
  }
  const Eigen::Index width = features.front().z.size();
  Matrix points(static_cast<Eigen::Index>(m), width);
  for (std::size_t i = 0; i < m; ++i) points.row(static_cast<Eigen::Index>(i)) = features[idx[i]].z;
  if (trace != nullptr) trace->coreset_size = m;

  ReferenceModel ref;
  ref.centers = spherical_kmeans(points, k, options.max_iterations, trace);
  ref.coreset_fraction = options.coreset_fraction;
  return ref;
}

int nearest_center(const RowVector& z, const ReferenceModel& ref) {
  const double norm = z.norm();
  if (norm == 0.0) throw Error("anomaly score undefined for a zero latent feature");
  int best = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  for (int c = 0; c < ref.k(); ++c) {
    const RowVector center = ref.centers.row(c);
    const double d = 0.5 * (1.0 - z.dot(center) / (norm * center.norm()));
    if (d < best_dist) {
      best_dist = d;
      best = c;
    }
  }
  return best;
}

double anomaly_score(const RowVector& z, const ReferenceModel& ref, bool divide_by_norm) {
  const int c = nearest_center(z, ref);
  const RowVector center = ref.centers.row(c);
  const double norm = z.norm();
  const double d = 0.5 * (1.0 - z.dot(center) / (norm * center.norm()));
  return divide_by_norm ? d / norm : d;
}

ad::Var anomaly_score(ad::Var z, const ReferenceModel& ref, bool divide_by_norm) {
  const int c = nearest_center(z.value(), ref);
  ad::Tape& tape = *z.tape();
  ad::Var d = ad::cosine_distance(z, tape.constant(ref.centers.row(c)));
  return divide_by_norm ? ad::divide(d, ad::l2_norm(z)) : d;
}

Labels predict_labels(std::span<const double> scores, double threshold) {
  Labels out(scores.size(), 0);
  for (std::size_t t = 0; t < scores.size(); ++t) out[t] = scores[t] > threshold ? 1 : 0;
  return out;
}

namespace {

double f1_from_counts(std::size_t tp, std::size_t fp, std::size_t fn) {
  if (tp == 0) return 0.0;
  const double t = static_cast<double>(tp);
  return 2.0 * t / (2.0 * t + static_cast<double>(fp) + static_cast<double>(fn));
}

}  // namespace

ThresholdResult search_threshold(std::span<const double> test_scores, const Labels& test_labels,
                                 std::span<const double> validation_scores, const F1Metric& metric) {
  if (test_scores.size() != test_labels.size()) throw ShapeError("scores and labels differ in length");
  if (validation_scores.empty()) throw DataError("threshold search needs validation scores");
  const double floor = std::accumulate(validation_scores.begin(), validation_scores.end(), 0.0) /
                       static_cast<double>(validation_scores.size());

  // Timestamps in descending score order; candidates are the distinct values above the floor.
  std::vector<std::size_t> order(test_scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return test_scores[a] > test_scores[b]; });

  const auto segments = segments_from_labels(test_labels);
  std::vector<int> segment_of(test_scores.size(), -1);
  for (std::size_t s = 0; s < segments.size(); ++s) {
    for (std::size_t t = segments[s].start; t <= segments[s].end; ++t) segment_of[t] = static_cast<int>(s);
  }
  std::size_t positives = 0;
  for (auto v : test_labels) positives += v;

  std::vector<std::size_t> hits(segments.size(), 0);
  std::vector<bool> adjusted(segments.size(), false);
  const bool pa = metric.kind == F1Metric::Kind::point_adjusted;
  std::size_t tp = 0;
  std::size_t fp = 0;

  ThresholdResult best;
  best.metric_value = -1.0;
  std::size_t next = 0;  // first element of `order` not yet predicted positive
  while (next < order.size() && test_scores[order[next]] > floor) {
    const double candidate = test_scores[order[next]];
    // Predicted set for this candidate = everything strictly above it.
    const double value = f1_from_counts(tp, fp, positives - tp);
    if (value > best.metric_value) {
      best.metric_value = value;
      best.threshold = candidate;
    }
    while (next < order.size() && test_scores[order[next]] == candidate) {
      const std::size_t t = order[next++];
      const int s = segment_of[t];
      if (s < 0) {
        ++fp;
        continue;
      }
      const auto su = static_cast<std::size_t>(s);
      if (adjusted[su]) continue;
      ++hits[su];
      if (!pa) {
        ++tp;
        continue;
      }
      const double ratio = static_cast<double>(hits[su]) / static_cast<double>(segments[su].length());
      if (ratio > metric.k_percent / 100.0) {
        adjusted[su] = true;
        tp += segments[su].length() - (hits[su] - 1);
      } else {
        ++tp;
      }
    }
  }
  if (best.metric_value < 0.0) {
    spdlog::warn("no test score above the validation mean {}; using it as the threshold", floor);
    return {floor, 0.0, true};
  }
  return best;
}

double quantile_threshold(std::span<const double> validation_scores, double q) {
  return prep::quantile(std::vector<double>(validation_scores.begin(), validation_scores.end()), q);
}

std::vector<double> window_scores(const Matrix& series, const FeatureExtractor& extractor,
                                  const ParameterSet& params, const ReferenceModel& ref, bool divide_by_norm,
                                  int stride) {
  const int w = extractor.config().window;
  if (series.rows() < w) throw ShapeError("series shorter than one window");
  if (stride < 1) throw ConfigError("score stride must be >= 1");
  const std::size_t count = prep::window_count(series.rows(), w, stride);
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto start = static_cast<Eigen::Index>(i) * stride;
    const LatentFeature z = extractor.extract(params, series.middleRows(start, w));
    out[i] = anomaly_score(z.z, ref, divide_by_norm);
  }
  return out;
}

std::vector<double> align_window_scores(std::span<const double> per_window, int w, std::size_t length, int stride) {
  if (stride < 1) throw ConfigError("score stride must be >= 1");
  if (per_window.empty() || per_window.size() != prep::window_count(static_cast<Eigen::Index>(length), w, stride)) {
    throw ShapeError("window scores do not cover the series");
  }
  const auto wu = static_cast<std::size_t>(w);
  const auto su = static_cast<std::size_t>(stride);
  std::vector<double> out(length);
  for (std::size_t t = 0; t < length; ++t) {
    // Latest window whose last row is at or before t.
    out[t] = t + 1 < wu ? per_window.front() : per_window[std::min((t + 1 - wu) / su, per_window.size() - 1)];
  }
  return out;
}

std::vector<double> score_series(const Matrix& series, const FeatureExtractor& extractor,
                                 const ParameterSet& params, const ReferenceModel& ref, bool divide_by_norm,
                                 int stride) {
  const auto per_window = window_scores(series, extractor, params, ref, divide_by_norm, stride);
  return align_window_scores(per_window, extractor.config().window, static_cast<std::size_t>(series.rows()), stride);
}

}  // namespace latad
