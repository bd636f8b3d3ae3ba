#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "latad/autodiff.hpp"
#include "latad/common.hpp"
#include "latad/parameters.hpp"

namespace latad {

struct ExtractorConfig {
  int window = 100;
  int features = 1;
  int d_model = 128;
  int conv_kernel = 5;
  int transformer_layers = 2;
  int transformer_heads = 4;
  /// Width of the position-wise feed-forward sublayer; 0 means 2 * d_model.
  int ffn_width = 0;
  int tcn_levels = 4;
  int tcn_kernel = 3;
  double leaky_slope = 0.2;
  std::uint64_t seed = 0;

  // Ablation switches. A disabled GAT or transformer drops its branch from the
  // concatenation; a disabled TCN is replaced by time-mean pooling plus a
  // linear projection to d_model.
  bool use_gat = true;
  bool use_transformer = true;
  bool use_tcn = true;

  int resolved_ffn_width() const { return ffn_width > 0 ? ffn_width : 2 * d_model; }
  int concat_width() const;
  /// Rows of the input that can influence the final TCN timestep.
  int tcn_receptive_field() const;
  void validate() const;
};

struct LatentFeature {
  RowVector z;
};

/// Intermediate activations from one forward pass, for inspection and tests.
struct ExtractorTrace {
  Matrix h_conv;
  Matrix h_feat;
  Matrix h_temp;
  Matrix gat_attention;
  /// One w x w matrix per (layer, head), layer-major.
  std::vector<Matrix> self_attention;
  std::vector<Matrix> tcn_levels;
};

/// f_theta: w x d window -> d_model latent feature. Parameters live in a
/// caller-owned ParameterSet under the "extractor/" namespace.
class FeatureExtractor {
 public:
  static constexpr const char* kPrefix = "extractor";

  /// Registers freshly initialised parameters in `params`.
  FeatureExtractor(const ExtractorConfig& config, ParameterSet& params);
  /// Binds to parameters that already exist in `params` (e.g. a loaded checkpoint).
  static FeatureExtractor bind(const ExtractorConfig& config, const ParameterSet& params);

  const ExtractorConfig& config() const { return config_; }

  ad::Var conv1d(ad::Tape& tape, const ParameterSet& params, ad::Var x) const;
  ad::Var gat(ad::Tape& tape, const ParameterSet& params, ad::Var h,
              ExtractorTrace* trace = nullptr) const;
  ad::Var transformer(ad::Tape& tape, const ParameterSet& params, ad::Var h,
                      ExtractorTrace* trace = nullptr) const;
  /// Fuses the branch outputs (w x d each) into a 1 x d_model feature.
  ad::Var fuse(ad::Tape& tape, const ParameterSet& params, std::span<const ad::Var> branches,
               ExtractorTrace* trace = nullptr) const;

  /// Full composition; returns a 1 x d_model Var.
  ad::Var forward(ad::Tape& tape, const ParameterSet& params, ad::Var x,
                  ExtractorTrace* trace = nullptr) const;

  LatentFeature extract(const ParameterSet& params, const Matrix& window,
                        ExtractorTrace* trace = nullptr) const;

 private:
  struct EncoderLayerSlots {
    std::size_t wq, bq, wk, bk, wv, bv, wo, bo;
    std::size_t ln1_gamma, ln1_beta, ff1_w, ff1_b, ff2_w, ff2_b, ln2_gamma, ln2_beta;
  };
  struct Slots {
    std::vector<std::size_t> conv_taps;
    std::size_t conv_bias = 0;
    std::size_t gat_attention = 0;
    std::size_t embed_w = 0, embed_b = 0;
    std::vector<EncoderLayerSlots> layers;
    std::size_t out_w = 0, out_b = 0;
    std::vector<std::vector<std::size_t>> tcn_taps;
    std::vector<std::size_t> tcn_bias;
    std::size_t head_w = 0, head_b = 0;
  };

  explicit FeatureExtractor(const ExtractorConfig& config);
  void register_parameters(ParameterSet& params);
  void resolve_slots(const ParameterSet& params);
  void check_input(const Matrix& x) const;

  ExtractorConfig config_;
  Matrix positional_;
  Slots slots_;
};

/// Fixed sinusoidal positional encoding, rows = positions.
Matrix sinusoidal_positions(int length, int width);

}  // namespace latad
