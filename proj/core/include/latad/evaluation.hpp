#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "latad/common.hpp"

namespace latad {

/// Inclusive [start, end] run of anomalous timestamps.
struct AnomalySegment {
  std::size_t start = 0;
  std::size_t end = 0;

  std::size_t length() const { return end - start + 1; }
  bool operator==(const AnomalySegment&) const = default;
};

struct Confusion {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
};

struct PrF1 {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Which F1 variant a threshold search optimises or a report column shows.
struct F1Metric {
  enum class Kind { raw, point_adjusted };
  Kind kind = Kind::raw;
  /// PA%k threshold in percent; 0 is plain point adjustment.
  double k_percent = 0.0;

  static F1Metric f1() { return {Kind::raw, 0.0}; }
  static F1Metric f1_pa_k(double k) { return {Kind::point_adjusted, k}; }
  static F1Metric f1_pa() { return {Kind::point_adjusted, 0.0}; }

  /// "F1", "F1_PA50", "F1_PA".
  std::string name() const;
};

std::vector<AnomalySegment> segments_from_labels(const Labels& y);
Labels labels_from_segments(const std::vector<AnomalySegment>& segments, std::size_t length);

Confusion confusion(const Labels& y, const Labels& y_hat);
/// Zero denominators yield 0.
PrF1 prf1(const Confusion& c);
PrF1 prf1(const Labels& y, const Labels& y_hat);

/// Every segment with at least one predicted 1 becomes all 1s.
Labels point_adjust(const Labels& y_hat, const std::vector<AnomalySegment>& segments);
/// Adjusts a segment only when hits / length > k / 100.
Labels pa_percent_k(const Labels& y_hat, const std::vector<AnomalySegment>& segments, double k_percent);

/// Applies the metric's adjustment (if any) and returns precision/recall/F1.
PrF1 evaluate_metric(const Labels& y, const Labels& y_hat, const F1Metric& metric);

/// Rank-based area under the ROC curve; ties get averaged ranks.
double auroc(std::span<const double> scores, const Labels& y);

struct MetricReport {
  std::string name;
  double threshold = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  Confusion counts;
  bool threshold_fallback = false;
};

struct EvalReport {
  MetricReport f1;
  MetricReport f1_pa_k;
  MetricReport f1_pa;
  double pa_k_percent = 50.0;
  double anomaly_ratio = 0.0;
  std::size_t length = 0;
  std::size_t segments = 0;
  bool degenerate = false;
  std::string threshold_protocol = "best-f1-per-metric";
  std::optional<double> auroc;
};

enum class ThresholdPolicy { best_f1, quantile };

/// Computes F1, F1_PA%k and F1_PA, each at its own best threshold (or at the
/// validation quantile threshold for ThresholdPolicy::quantile).
EvalReport evaluate_all(std::span<const double> test_scores, const Labels& y,
                        std::span<const double> validation_scores, ThresholdPolicy policy,
                        double pa_k_percent = 50.0, double quantile = 0.995);

/// One Table-style row: "name | F1 | F1_PA50 | F1_PA".
std::string format_table_row(const std::string& name, const EvalReport& report);

}  // namespace latad
