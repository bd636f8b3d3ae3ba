#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "latad/autodiff.hpp"
#include "latad/common.hpp"
#include "latad/parameters.hpp"
#include "latad/preprocessing.hpp"

namespace latad {

// ---- stationarity ---------------------------------------------------------

struct AdfResult {
  double statistic = 0.0;
  double p_value = 1.0;
  int lags = 0;
  int observations = 0;
};

/// Augmented Dickey-Fuller test with a constant term and a fixed lag order.
/// Returns nullopt when the sample is too short or the regression is singular.
std::optional<AdfResult> adf_test(std::span<const double> series, int lags);

/// MacKinnon (1994) approximate p-value for the constant-only ADF statistic.
double mackinnon_p_value(double statistic);

/// Lag order used for neighbourhood tests: floor((n - 1)^(1/3)).
int default_adf_lags(std::size_t n);

// ---- positive sampling ----------------------------------------------------

struct NeighborhoodSpec {
  Eigen::Index center = 0;
  int eta = 1;
  int delta = 1;
  double adf_p_threshold = 0.01;

  /// Inclusive-exclusive row range [first, last) clipped to [0, length).
  std::pair<Eigen::Index, Eigen::Index> bounds(Eigen::Index length) const;
};

struct NeighborhoodOptions {
  double adf_p_threshold = 0.01;
  int eta_max = 3;
};

/// Widest eta in [1, eta_max] whose neighbourhood stays stationary, where a
/// segment passes while the max per-feature ADF p-value is <= the threshold.
int find_neighborhood_eta(const Matrix& series, Eigen::Index center, int delta,
                          const NeighborhoodOptions& options);

/// Centres t* ~ round(Normal(center, max(1, eta * delta))), clipped so that a
/// window of length delta centred on t* fits in the series.
std::vector<Eigen::Index> sample_positive_centers(Eigen::Index length, Eigen::Index center, int eta,
                                                  int delta, int count, std::mt19937_64& rng);

std::vector<Window> sample_positives(const Matrix& series, Eigen::Index center, int eta, int delta,
                                     int count, std::mt19937_64& rng);

/// Start row of the length-w window centred on `center`, clipped into range.
Eigen::Index window_start_for_center(Eigen::Index center, int w, Eigen::Index length);
Eigen::Index window_center(Eigen::Index start, int w);

// ---- negative generation --------------------------------------------------

struct GeneratorConfig {
  int count = 4;
  int window = 100;
  int features = 1;
  /// 0 means window * features / 2.
  int hidden = 0;
  double leaky_slope = 0.2;
  std::uint64_t seed = 0;

  int resolved_hidden() const;
  void validate() const;
};

/// N learnable mask generators g_phi_i. Parameters live under "generator/<i>/".
class MaskGenerators {
 public:
  static constexpr const char* kPrefix = "generator";

  MaskGenerators(const GeneratorConfig& config, ParameterSet& params);
  static MaskGenerators bind(const GeneratorConfig& config, const ParameterSet& params);

  const GeneratorConfig& config() const { return config_; }
  int count() const { return config_.count; }

  /// sigmoid(LeakyReLU(flat(x) W1 + b1) W2 + b2), reshaped to w x d.
  ad::Var mask(ad::Tape& tape, const ParameterSet& params, ad::Var x, int generator) const;
  /// mask .* x
  ad::Var negative(ad::Tape& tape, const ParameterSet& params, ad::Var x, int generator) const;

  Matrix generate_mask(const ParameterSet& params, const Matrix& x, int generator) const;
  std::vector<Window> generate_negatives(const ParameterSet& params, const Window& x) const;

  /// Smallest pairwise Frobenius distance between the N masks of a probe window.
  double min_pairwise_mask_distance(const ParameterSet& params, const Matrix& probe) const;

 private:
  struct Slots {
    std::size_t w1, b1, w2, b2;
  };
  explicit MaskGenerators(const GeneratorConfig& config);
  void resolve_slots(const ParameterSet& params);

  GeneratorConfig config_;
  std::vector<Slots> slots_;
};

}  // namespace latad
