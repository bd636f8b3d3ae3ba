#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "latad/augmentation.hpp"
#include "latad/autodiff.hpp"
#include "latad/common.hpp"
#include "latad/feature_extractor.hpp"
#include "latad/parameters.hpp"

namespace latad {

struct TrainConfig {
  double lambda = 0.1;
  double margin_min = 0.5;
  double margin_max = 0.999;
  double learning_rate = 1e-3;
  double clip_norm = 5.0;
  int batch_size = 32;
  int max_epoch = 20;
  int window_stride = 10;
  std::uint64_t seed = 0;
  NeighborhoodOptions neighborhood;

  bool use_comp = true;
  bool use_reg = true;

  void validate() const;
};

/// Latent features of one anchor with its N positives and N negatives.
struct Triplet {
  RowVector anchor;
  std::vector<RowVector> positives;
  std::vector<RowVector> negatives;
};
using TripletBatch = std::vector<Triplet>;

struct LossTerms {
  double comp = 0.0;
  double sep = 0.0;
  double reg = 0.0;
  double total = 0.0;
};

/// (1 - cos(u, v)) / 2. Throws on a zero vector.
double cosine_distance(const RowVector& u, const RowVector& v);

double compactness_loss(const TripletBatch& batch);
double separateness_loss(const TripletBatch& batch, std::span<const double> margins);
/// Mean KL(softmax(z+) || softmax(z-)) over pairs, then over the batch.
double kld_regularizer(const TripletBatch& batch);
/// L_comp + L_sep + lambda * L_reg with disabled terms zeroed.
double combine_losses(double comp, double sep, double reg, const TrainConfig& config);
LossTerms total_loss(const TripletBatch& batch, std::span<const double> margins, const TrainConfig& config);

/// Margins drawn once, uniform in [margin_min, margin_max].
std::vector<double> draw_margins(int count, const TrainConfig& config);

/// Differentiable per-anchor objective. `terms` receives the component values.
ad::Var triplet_objective(ad::Var anchor, std::span<const ad::Var> positives,
                          std::span<const ad::Var> negatives, std::span<const double> margins,
                          const TrainConfig& config, LossTerms* terms = nullptr);

/// Extractor, generators and margins sharing one parameter set.
struct LatadModel {
  ExtractorConfig extractor_config;
  GeneratorConfig generator_config;
  ParameterSet params;
  std::vector<double> margins;

  static LatadModel create(const ExtractorConfig& extractor, const GeneratorConfig& generators,
                           const TrainConfig& train);

  FeatureExtractor extractor() const { return FeatureExtractor::bind(extractor_config, params); }
  MaskGenerators generators() const { return MaskGenerators::bind(generator_config, params); }
};

struct EpochRecord {
  int epoch = 0;
  LossTerms mean;
  /// Smallest pairwise distance between the N masks of a fixed probe window.
  double mask_diversity = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Joint optimisation of extractor and generators over sliding windows of
/// `series`. On divergence the model is restored to the last finite
/// parameters and DivergenceError is thrown.
TrainHistory fit(const Matrix& series, LatadModel& model, const TrainConfig& config,
                 const EpochCallback& on_epoch = {});

/// Loss and gradients for one batch of anchor start rows, exposed for
/// gradient checking. Positive centres come from `rng`.
LossTerms batch_loss_and_gradients(const Matrix& series, const LatadModel& model,
                                   std::span<const Eigen::Index> anchor_starts,
                                   std::span<const int> etas, const TrainConfig& config,
                                   std::mt19937_64& rng, std::vector<Matrix>* grads);

std::vector<LatentFeature> extract_features(const FeatureExtractor& extractor, const ParameterSet& params,
                                            std::span<const Window> windows);

}  // namespace latad
