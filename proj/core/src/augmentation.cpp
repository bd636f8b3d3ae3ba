#include "latad/augmentation.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>
#include <fmt/format.h>

namespace latad {

namespace {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace

double mackinnon_p_value(double statistic) {
  // Response-surface coefficients for the constant-only case, N = 1.
  constexpr double kTauMax = 2.74;
  constexpr double kTauMin = -18.83;
  constexpr double kTauStar = -1.61;
  constexpr double kSmall[] = {2.1659, 1.4412, 0.038269};
  constexpr double kLarge[] = {1.7339, 0.93202, -0.12745, -0.010368};
  if (statistic > kTauMax) return 1.0;
  if (statistic < kTauMin) return 0.0;
  double poly = 0.0;
  if (statistic <= kTauStar) {
    for (int i = 2; i >= 0; --i) poly = poly * statistic + kSmall[i];
  } else {
    for (int i = 3; i >= 0; --i) poly = poly * statistic + kLarge[i];
  }
  return normal_cdf(poly);
}

int default_adf_lags(std::size_t n) {
  if (n < 2) return 0;
  return static_cast<int>(std::floor(std::cbrt(static_cast<double>(n - 1))));
}

std::optional<AdfResult> adf_test(std::span<const double> series, int lags) {
  if (lags < 0) throw ConfigError("ADF lag order must be non-negative");
  const auto n = static_cast<Eigen::Index>(series.size());
  const Eigen::Index obs = n - lags - 1;
  const Eigen::Index regressors = lags + 2;
  if (obs < regressors + 3) return std::nullopt;

  // dy_t = alpha + beta * y_{t-1} + sum_i gamma_i dy_{t-i}, t = lags+1 .. n-1.
  Matrix design(obs, regressors);
  Vector target(obs);
  for (Eigen::Index r = 0; r < obs; ++r) {
    const Eigen::Index t = r + lags + 1;
    target(r) = series[static_cast<std::size_t>(t)] - series[static_cast<std::size_t>(t - 1)];
    design(r, 0) = series[static_cast<std::size_t>(t - 1)];
    for (int i = 1; i <= lags; ++i) {
      design(r, i) = series[static_cast<std::size_t>(t - i)] - series[static_cast<std::size_t>(t - i - 1)];
    }
    design(r, regressors - 1) = 1.0;
  }
  const Matrix gram = design.transpose() * design;
  Eigen::FullPivLU<Matrix> lu(gram);
  if (!lu.isInvertible()) return std::nullopt;
  const Matrix gram_inv = lu.inverse();
  const Vector coef = gram_inv * (design.transpose() * target);
  const Vector resid = target - design * coef;
  const double sigma2 = resid.squaredNorm() / static_cast<double>(obs - regressors);
  const double se = std::sqrt(sigma2 * gram_inv(0, 0));
  if (!(se > 0.0) || !std::isfinite(se)) return std::nullopt;

  AdfResult result;
  result.statistic = coef(0) / se;
  result.p_value = mackinnon_p_value(result.statistic);
  result.lags = lags;
  result.observations = static_cast<int>(obs);
  return result;
}

std::pair<Eigen::Index, Eigen::Index> NeighborhoodSpec::bounds(Eigen::Index length) const {
  const double half = static_cast<double>(eta) * static_cast<double>(delta) / 2.0;
  const auto first = static_cast<Eigen::Index>(std::floor(static_cast<double>(center) - half));
  const auto last = static_cast<Eigen::Index>(std::ceil(static_cast<double>(center) + half));
  return {std::max<Eigen::Index>(first, 0), std::min<Eigen::Index>(last + 1, length)};
}

int find_neighborhood_eta(const Matrix& series, Eigen::Index center, int delta,
                          const NeighborhoodOptions& options) {
  if (options.eta_max < 1) throw ConfigError("eta_max must be >= 1");
  int best = 1;
  for (int eta = 1; eta <= options.eta_max; ++eta) {
    const NeighborhoodSpec spec{center, eta, delta, options.adf_p_threshold};
    const auto [first, last] = spec.bounds(series.rows());
    const Eigen::Index len = last - first;
    double worst_p = 0.0;
    for (Eigen::Index j = 0; j < series.cols(); ++j) {
      const Vector col = series.col(j).segment(first, len);
      if (col.maxCoeff() == col.minCoeff()) continue;  // constant: trivially stationary
      const auto res = adf_test(std::span<const double>(col.data(), static_cast<std::size_t>(len)),
                                default_adf_lags(static_cast<std::size_t>(len)));
      if (!res) return 1;
      worst_p = std::max(worst_p, res->p_value);
    }
    if (worst_p > options.adf_p_threshold) break;
    best = eta;
  }
  return best;
}

Eigen::Index window_center(Eigen::Index start, int w) { return start + w / 2; }

Eigen::Index window_start_for_center(Eigen::Index center, int w, Eigen::Index length) {
  const Eigen::Index start = center - w / 2;
  return std::clamp<Eigen::Index>(start, 0, std::max<Eigen::Index>(length - w, 0));
}

std::vector<Eigen::Index> sample_positive_centers(Eigen::Index length, Eigen::Index center, int eta,
                                                  int delta, int count, std::mt19937_64& rng) {
  if (delta > length) throw ShapeError("window longer than series");
  const double sigma = std::max(1.0, static_cast<double>(eta) * static_cast<double>(delta));
  std::normal_distribution<double> dist(static_cast<double>(center), sigma);
  const Eigen::Index lo = delta / 2;
  const Eigen::Index hi = length - delta + delta / 2;
  std::vector<Eigen::Index> centers;
  centers.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const auto c = static_cast<Eigen::Index>(std::llround(dist(rng)));
    centers.push_back(std::clamp(c, lo, hi));
  }
  return centers;
}

std::vector<Window> sample_positives(const Matrix& series, Eigen::Index center, int eta, int delta,
                                     int count, std::mt19937_64& rng) {
  std::vector<Window> out;
  for (Eigen::Index c : sample_positive_centers(series.rows(), center, eta, delta, count, rng)) {
    const Eigen::Index start = window_start_for_center(c, delta, series.rows());
    out.push_back({series.middleRows(start, delta), start, std::nullopt});
  }
  return out;
}

int GeneratorConfig::resolved_hidden() const {
  return hidden > 0 ? hidden : std::max(1, window * features / 2);
}

void GeneratorConfig::validate() const {
  if (count < 1) throw ConfigError("generator count must be >= 1");
  if (window < 1 || features < 1) throw ConfigError("generator window/features must be >= 1");
}

MaskGenerators::MaskGenerators(const GeneratorConfig& config) : config_(config) { config_.validate(); }

MaskGenerators::MaskGenerators(const GeneratorConfig& config, ParameterSet& params)
    : MaskGenerators(config) {
  std::mt19937_64 rng(config_.seed);
  const int flat = config_.window * config_.features;
  const int hidden = config_.resolved_hidden();
  for (int i = 0; i < config_.count; ++i) {
    const std::string p = fmt::format("{}/{}", kPrefix, i);
    params.add(p + "/w1", uniform_fan_in(flat, hidden, flat, rng));
    params.add(p + "/b1", Matrix::Zero(1, hidden));
    params.add(p + "/w2", uniform_fan_in(hidden, flat, hidden, rng));
    params.add(p + "/b2", Matrix::Zero(1, flat));
  }
  resolve_slots(params);
}

MaskGenerators MaskGenerators::bind(const GeneratorConfig& config, const ParameterSet& params) {
  MaskGenerators g(config);
  g.resolve_slots(params);
  return g;
}

void MaskGenerators::resolve_slots(const ParameterSet& params) {
  const Eigen::Index flat = config_.window * config_.features;
  const Eigen::Index hidden = config_.resolved_hidden();
  slots_.clear();
  for (int i = 0; i < config_.count; ++i) {
    const std::string p = fmt::format("{}/{}", kPrefix, i);
    Slots s{params.slot(p + "/w1"), params.slot(p + "/b1"), params.slot(p + "/w2"), params.slot(p + "/b2")};
    if (params.value(s.w1).rows() != flat || params.value(s.w1).cols() != hidden ||
        params.value(s.w2).rows() != hidden || params.value(s.w2).cols() != flat) {
      throw ShapeError(fmt::format("generator {} parameters do not match a {}x{} window", i,
                                   config_.window, config_.features));
    }
    slots_.push_back(s);
  }
}

ad::Var MaskGenerators::mask(ad::Tape& tape, const ParameterSet& params, ad::Var x, int generator) const {
  if (generator < 0 || generator >= config_.count) throw ConfigError("generator index out of range");
  if (x.rows() != config_.window || x.cols() != config_.features) {
    throw ShapeError("generator input does not match configured window shape");
  }
  const Slots& s = slots_[static_cast<std::size_t>(generator)];
  ad::Var flat = ad::reshape(x, 1, x.rows() * x.cols());
  ad::Var h = ad::leaky_relu(
      ad::add_row(ad::matmul(flat, params.var(tape, s.w1)), params.var(tape, s.b1)), config_.leaky_slope);
  ad::Var logits = ad::add_row(ad::matmul(h, params.var(tape, s.w2)), params.var(tape, s.b2));
  return ad::reshape(ad::sigmoid(logits), x.rows(), x.cols());
}

ad::Var MaskGenerators::negative(ad::Tape& tape, const ParameterSet& params, ad::Var x,
                                 int generator) const {
  return ad::hadamard(mask(tape, params, x, generator), x);
}

Matrix MaskGenerators::generate_mask(const ParameterSet& params, const Matrix& x, int generator) const {
  ad::Tape tape(false);
  return mask(tape, params, tape.constant(x), generator).value();
}

std::vector<Window> MaskGenerators::generate_negatives(const ParameterSet& params, const Window& x) const {
  std::vector<Window> out;
  out.reserve(static_cast<std::size_t>(config_.count));
  for (int i = 0; i < config_.count; ++i) {
    out.push_back({generate_mask(params, x.data, i).cwiseProduct(x.data), x.start_index, std::nullopt});
  }
  return out;
}

double MaskGenerators::min_pairwise_mask_distance(const ParameterSet& params, const Matrix& probe) const {
  std::vector<Matrix> masks;
  for (int i = 0; i < config_.count; ++i) masks.push_back(generate_mask(params, probe, i));
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < masks.size(); ++a) {
    for (std::size_t b = a + 1; b < masks.size(); ++b) best = std::min(best, (masks[a] - masks[b]).norm());
  }
  return best;
}

}  // namespace latad
