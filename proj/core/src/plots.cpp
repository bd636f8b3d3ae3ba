#include "latad/plots.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

namespace latad::plots {

namespace {

constexpr double kWidth = 900.0;
constexpr double kHeight = 300.0;
constexpr double kMargin = 40.0;

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string header(double w, double h) {
  return fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\">\n"
      "<rect width=\"{0}\" height=\"{1}\" fill=\"white\"/>\n",
      w, h);
}

struct Frame {
  double lo;
  double hi;
  std::size_t n;
  double x(std::size_t i) const {
    return kMargin + (n > 1 ? static_cast<double>(i) / static_cast<double>(n - 1) : 0.5) * (kWidth - 2 * kMargin);
  }
  double y(double v) const {
    const double span = hi > lo ? hi - lo : 1.0;
    return kHeight - kMargin - (v - lo) / span * (kHeight - 2 * kMargin);
  }
};

std::string polyline(std::span<const double> v, const Frame& f, const char* colour) {
  std::string pts;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (std::isfinite(v[i])) pts += fmt::format("{:.2f},{:.2f} ", f.x(i), f.y(v[i]));
  }
  return fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1\" points=\"{}\"/>\n", colour, pts);
}

std::string axes(const Frame& f) {
  return fmt::format(
      "<line x1=\"{0}\" y1=\"{2}\" x2=\"{1}\" y2=\"{2}\" stroke=\"black\"/>\n"
      "<line x1=\"{0}\" y1=\"{3}\" x2=\"{0}\" y2=\"{2}\" stroke=\"black\"/>\n"
      "<text x=\"4\" y=\"{3}\" font-size=\"10\">{4:.3g}</text>\n"
      "<text x=\"4\" y=\"{2}\" font-size=\"10\">{5:.3g}</text>\n",
      kMargin, kWidth - kMargin, kHeight - kMargin, kMargin, f.hi, f.lo);
}

Frame frame_for(std::span<const double> v, double extra) {
  double lo = extra;
  double hi = extra;
  for (double x : v) {
    if (!std::isfinite(x)) continue;
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  return {lo, hi, v.size()};
}

}  // namespace

Matrix pearson_correlation(const Matrix& x) {
  const Eigen::Index d = x.cols();
  Matrix centered = x.rowwise() - x.colwise().mean();
  Vector norms = centered.colwise().norm().transpose();
  Matrix corr = Matrix::Identity(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = i + 1; j < d; ++j) {
      double r = 0.0;
      if (norms(i) > 0.0 && norms(j) > 0.0) {
        r = std::clamp(centered.col(i).dot(centered.col(j)) / (norms(i) * norms(j)), -1.0, 1.0);
      }
      corr(i, j) = corr(j, i) = r;
    }
  }
  return corr;
}

std::string score_trace_svg(std::span<const double> scores, double threshold, const Labels* labels) {
  const Frame f = frame_for(scores, threshold);
  std::string svg = header(kWidth, kHeight);
  if (labels) {
    for (std::size_t i = 0; i < labels->size() && i < scores.size(); ++i) {
      if (!(*labels)[i]) continue;
      const double w = std::max(1.0, (kWidth - 2 * kMargin) / static_cast<double>(std::max<std::size_t>(1, scores.size())));
      svg += fmt::format("<rect x=\"{:.2f}\" y=\"{}\" width=\"{:.2f}\" height=\"{}\" fill=\"#f4c7c3\"/>\n", f.x(i),
                         kMargin, w, kHeight - 2 * kMargin);
    }
  }
  svg += axes(f);
  svg += polyline(scores, f, "#1f4e9c");
  svg += fmt::format("<line x1=\"{0}\" y1=\"{2:.2f}\" x2=\"{1}\" y2=\"{2:.2f}\" stroke=\"#c0392b\" stroke-dasharray=\"4 3\"/>\n",
                     kMargin, kWidth - kMargin, f.y(threshold));
  svg += fmt::format("<text x=\"{}\" y=\"20\" font-size=\"12\">anomaly score (threshold {:.4g})</text>\n", kMargin,
                     threshold);
  return svg + "</svg>\n";
}

std::string heatmap_svg(const Matrix& corr, const std::vector<std::string>& names) {
  const auto d = static_cast<double>(corr.rows());
  const double cell = std::clamp(600.0 / std::max(1.0, d), 4.0, 40.0);
  const double label = 90.0;
  const double size = label + cell * d + 10.0;
  std::string svg = header(size, size);
  for (Eigen::Index i = 0; i < corr.rows(); ++i) {
    for (Eigen::Index j = 0; j < corr.cols(); ++j) {
      const double v = std::clamp(corr(i, j), -1.0, 1.0);
      // Blue for negative, red for positive, white at zero.
      const int fade = static_cast<int>(255.0 * (1.0 - std::abs(v)));
      const std::string colour = v >= 0 ? fmt::format("rgb(255,{0},{0})", fade) : fmt::format("rgb({0},{0},255)", fade);
      svg += fmt::format("<rect x=\"{:.2f}\" y=\"{:.2f}\" width=\"{:.2f}\" height=\"{:.2f}\" fill=\"{}\"><title>{:.3f}</title></rect>\n",
                         label + static_cast<double>(j) * cell, label + static_cast<double>(i) * cell, cell, cell,
                         colour, corr(i, j));
    }
    if (static_cast<std::size_t>(i) < names.size() && cell >= 8.0) {
      svg += fmt::format("<text x=\"2\" y=\"{:.2f}\" font-size=\"9\">{}</text>\n",
                         label + (static_cast<double>(i) + 0.7) * cell, escape(names[static_cast<std::size_t>(i)]));
    }
  }
  return svg + "</svg>\n";
}

std::string trend_svg(std::span<const double> values, const std::string& title, std::size_t highlight_begin,
                      std::size_t highlight_end) {
  const Frame f = frame_for(values, values.empty() ? 0.0 : values[0]);
  std::string svg = header(kWidth, kHeight);
  if (highlight_end > highlight_begin && highlight_begin < values.size()) {
    const double x0 = f.x(highlight_begin);
    const double x1 = f.x(std::min(highlight_end, values.size()) - 1);
    svg += fmt::format("<rect x=\"{:.2f}\" y=\"{}\" width=\"{:.2f}\" height=\"{}\" fill=\"#fde9c9\"/>\n", x0, kMargin,
                       std::max(1.0, x1 - x0), kHeight - 2 * kMargin);
  }
  svg += axes(f);
  svg += polyline(values, f, "#2d6a4f");
  svg += fmt::format("<text x=\"{}\" y=\"20\" font-size=\"12\">{}</text>\n", kMargin, escape(title));
  return svg + "</svg>\n";
}

}  // namespace latad::plots
