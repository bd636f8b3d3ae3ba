#include "latad/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "latad/scoring.hpp"

namespace latad {

std::string F1Metric::name() const {
  if (kind == Kind::raw) return "F1";
  if (k_percent == 0.0) return "F1_PA";
  return fmt::format("F1_PA{:g}", k_percent);
}

std::vector<AnomalySegment> segments_from_labels(const Labels& y) {
  std::vector<AnomalySegment> out;
  for (std::size_t t = 0; t < y.size(); ++t) {
    if (y[t] == 0) continue;
    if (!out.empty() && out.back().end + 1 == t) {
      out.back().end = t;
    } else {
      out.push_back({t, t});
    }
  }
  return out;
}

Labels labels_from_segments(const std::vector<AnomalySegment>& segments, std::size_t length) {
  Labels y(length, 0);
  for (const auto& s : segments) {
    if (s.end >= length || s.start > s.end) throw ShapeError("segment outside label range");
    std::fill(y.begin() + static_cast<std::ptrdiff_t>(s.start), y.begin() + static_cast<std::ptrdiff_t>(s.end) + 1, 1);
  }
  return y;
}

Confusion confusion(const Labels& y, const Labels& y_hat) {
  if (y.size() != y_hat.size()) throw ShapeError("label and prediction lengths differ");
  Confusion c;
  for (std::size_t t = 0; t < y.size(); ++t) {
    if (y_hat[t] && y[t]) ++c.tp;
    else if (y_hat[t]) ++c.fp;
    else if (y[t]) ++c.fn;
  }
  return c;
}

PrF1 prf1(const Confusion& c) {
  PrF1 r;
  const auto tp = static_cast<double>(c.tp);
  if (c.tp + c.fp > 0) r.precision = tp / static_cast<double>(c.tp + c.fp);
  if (c.tp + c.fn > 0) r.recall = tp / static_cast<double>(c.tp + c.fn);
  if (r.precision + r.recall > 0.0) r.f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
  return r;
}

PrF1 prf1(const Labels& y, const Labels& y_hat) { return prf1(confusion(y, y_hat)); }

Labels pa_percent_k(const Labels& y_hat, const std::vector<AnomalySegment>& segments, double k_percent) {
  if (k_percent < 0.0 || k_percent > 100.0) throw ConfigError("PA%k requires 0 <= k <= 100");
  Labels out = y_hat;
  for (const auto& s : segments) {
    if (s.end >= y_hat.size()) throw ShapeError("segment outside prediction range");
    std::size_t hits = 0;
    for (std::size_t t = s.start; t <= s.end; ++t) hits += y_hat[t] ? 1 : 0;
    const double ratio = static_cast<double>(hits) / static_cast<double>(s.length());
    if (ratio > k_percent / 100.0) {
      std::fill(out.begin() + static_cast<std::ptrdiff_t>(s.start), out.begin() + static_cast<std::ptrdiff_t>(s.end) + 1, 1);
    }
  }
  return out;
}

Labels point_adjust(const Labels& y_hat, const std::vector<AnomalySegment>& segments) {
  return pa_percent_k(y_hat, segments, 0.0);
}

PrF1 evaluate_metric(const Labels& y, const Labels& y_hat, const F1Metric& metric) {
  if (metric.kind == F1Metric::Kind::raw) return prf1(y, y_hat);
  return prf1(y, pa_percent_k(y_hat, segments_from_labels(y), metric.k_percent));
}

double auroc(std::span<const double> scores, const Labels& y) {
  if (scores.size() != y.size()) throw ShapeError("scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double pos_rank_sum = 0.0;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // ranks are 1-based
    for (std::size_t k = i; k < j; ++k) {
      if (y[order[k]]) {
        pos_rank_sum += avg_rank;
        ++pos;
      }
    }
    i = j;
  }
  const std::size_t neg = y.size() - pos;
  if (pos == 0 || neg == 0) throw DataError("AUROC needs both classes");
  const double p = static_cast<double>(pos);
  return (pos_rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(neg));
}

namespace {

MetricReport report_at(std::span<const double> scores, const Labels& y, const F1Metric& metric,
                       double threshold, bool fallback) {
  const Labels y_hat = predict_labels(scores, threshold);
  const Labels adjusted = metric.kind == F1Metric::Kind::raw
                              ? y_hat
                              : pa_percent_k(y_hat, segments_from_labels(y), metric.k_percent);
  MetricReport r;
  r.name = metric.name();
  r.threshold = threshold;
  r.counts = confusion(y, adjusted);
  const PrF1 m = prf1(r.counts);
  r.precision = m.precision;
  r.recall = m.recall;
  r.f1 = m.f1;
  r.threshold_fallback = fallback;
  return r;
}

}  // namespace

EvalReport evaluate_all(std::span<const double> test_scores, const Labels& y,
                        std::span<const double> validation_scores, ThresholdPolicy policy,
                        double pa_k_percent, double quantile) {
  if (test_scores.size() != y.size()) throw ShapeError("scores and labels differ in length");
  EvalReport report;
  report.pa_k_percent = pa_k_percent;
  report.length = y.size();
  const auto positives = static_cast<double>(std::count(y.begin(), y.end(), 1));
  report.anomaly_ratio = y.empty() ? 0.0 : positives / static_cast<double>(y.size());
  report.segments = segments_from_labels(y).size();
  report.degenerate = positives == 0.0;
  if (!report.degenerate && positives < static_cast<double>(y.size())) report.auroc = auroc(test_scores, y);

  const F1Metric metrics[] = {F1Metric::f1(), F1Metric::f1_pa_k(pa_k_percent), F1Metric::f1_pa()};
  MetricReport* slots[] = {&report.f1, &report.f1_pa_k, &report.f1_pa};
  if (policy == ThresholdPolicy::quantile) {
    report.threshold_protocol = fmt::format("validation-quantile-{:g}", quantile);
    const double delta = quantile_threshold(validation_scores, quantile);
    for (int i = 0; i < 3; ++i) *slots[i] = report_at(test_scores, y, metrics[i], delta, false);
  } else {
    for (int i = 0; i < 3; ++i) {
      const ThresholdResult best = search_threshold(test_scores, y, validation_scores, metrics[i]);
      *slots[i] = report_at(test_scores, y, metrics[i], best.threshold, best.fallback);
    }
  }
  return report;
}

std::string format_table_row(const std::string& name, const EvalReport& report) {
  return fmt::format("{:<16} | {:>6.2f} | {:>8.2f} | {:>6.2f}", name, report.f1.f1, report.f1_pa_k.f1,
                     report.f1_pa.f1);
}

}  // namespace latad
