#pragma once

#include <span>
#include <string>
#include <vector>

#include "latad/common.hpp"

namespace latad::plots {

/// Pearson correlation between columns. Constant columns correlate 0 with
/// everything but themselves.
Matrix pearson_correlation(const Matrix& x);

/// Score trace with a horizontal threshold line; labelled rows are shaded.
std::string score_trace_svg(std::span<const double> scores, double threshold, const Labels* labels = nullptr);

/// Colour-mapped d x d matrix in [-1, 1].
std::string heatmap_svg(const Matrix& corr, const std::vector<std::string>& names);

/// One feature over a window, with [highlight_begin, highlight_end) shaded.
std::string trend_svg(std::span<const double> values, const std::string& title, std::size_t highlight_begin,
                      std::size_t highlight_end);

}  // namespace latad::plots
