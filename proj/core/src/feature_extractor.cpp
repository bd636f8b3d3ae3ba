#include "latad/feature_extractor.hpp"

#include <cmath>
#include <random>

#include <fmt/format.h>

namespace latad {

using ad::Tape;
using ad::Var;

int ExtractorConfig::concat_width() const {
  int branches = 1;
  if (use_gat) ++branches;
  if (use_transformer) ++branches;
  return branches * features;
}

int ExtractorConfig::tcn_receptive_field() const {
  int dilation_sum = 0;
  for (int l = 0; l < tcn_levels; ++l) dilation_sum += 1 << l;
  return 1 + (tcn_kernel - 1) * dilation_sum;
}

void ExtractorConfig::validate() const {
  if (window < 1) throw ConfigError("window must be >= 1");
  if (features < 1) throw ConfigError("feature count must be >= 1");
  if (d_model < 1) throw ConfigError("d_model must be >= 1");
  if (conv_kernel < 1 || conv_kernel % 2 == 0) throw ConfigError("conv_kernel must be odd");
  if (tcn_levels < 1) throw ConfigError("tcn_levels must be >= 1");
  if (tcn_kernel < 1) throw ConfigError("tcn_kernel must be >= 1");
  if (use_transformer) {
    if (transformer_layers < 1) throw ConfigError("transformer_layers must be >= 1");
    if (transformer_heads < 1 || d_model % transformer_heads != 0) {
      throw ConfigError(fmt::format("d_model {} is not divisible by {} heads", d_model, transformer_heads));
    }
  }
}

Matrix sinusoidal_positions(int length, int width) {
  Matrix pe(length, width);
  for (int t = 0; t < length; ++t) {
    for (int i = 0; i < width; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / width);
      pe(t, i) = (i % 2 == 0) ? std::sin(t * freq) : std::cos(t * freq);
    }
  }
  return pe;
}

FeatureExtractor::FeatureExtractor(const ExtractorConfig& config) : config_(config) {
  config_.validate();
  positional_ = sinusoidal_positions(config_.window, config_.d_model);
}

FeatureExtractor::FeatureExtractor(const ExtractorConfig& config, ParameterSet& params)
    : FeatureExtractor(config) {
  register_parameters(params);
  resolve_slots(params);
}

FeatureExtractor FeatureExtractor::bind(const ExtractorConfig& config, const ParameterSet& params) {
  FeatureExtractor fx(config);
  fx.resolve_slots(params);
  return fx;
}

void FeatureExtractor::register_parameters(ParameterSet& params) {
  std::mt19937_64 rng(config_.seed);
  const int d = config_.features;
  const int w = config_.window;
  const int dm = config_.d_model;
  const std::string p = kPrefix;

  for (int k = 0; k < config_.conv_kernel; ++k) {
    params.add(fmt::format("{}/conv/tap{}", p, k), uniform_fan_in(d, d, d * config_.conv_kernel, rng));
  }
  params.add(p + "/conv/bias", Matrix::Zero(1, d));

  if (config_.use_gat) params.add(p + "/gat/attention", uniform_fan_in(2 * w, 1, 2 * w, rng));

  if (config_.use_transformer) {
    const int ff = config_.resolved_ffn_width();
    params.add(p + "/transformer/embed/weight", uniform_fan_in(d, dm, d, rng));
    params.add(p + "/transformer/embed/bias", Matrix::Zero(1, dm));
    for (int l = 0; l < config_.transformer_layers; ++l) {
      const std::string lp = fmt::format("{}/transformer/layer{}", p, l);
      for (const char* proj : {"query", "key", "value", "output"}) {
        params.add(fmt::format("{}/{}/weight", lp, proj), uniform_fan_in(dm, dm, dm, rng));
        params.add(fmt::format("{}/{}/bias", lp, proj), Matrix::Zero(1, dm));
      }
      params.add(lp + "/norm1/gamma", Matrix::Ones(1, dm));
      params.add(lp + "/norm1/beta", Matrix::Zero(1, dm));
      params.add(lp + "/ff1/weight", uniform_fan_in(dm, ff, dm, rng));
      params.add(lp + "/ff1/bias", Matrix::Zero(1, ff));
      params.add(lp + "/ff2/weight", uniform_fan_in(ff, dm, ff, rng));
      params.add(lp + "/ff2/bias", Matrix::Zero(1, dm));
      params.add(lp + "/norm2/gamma", Matrix::Ones(1, dm));
      params.add(lp + "/norm2/beta", Matrix::Zero(1, dm));
    }
    params.add(p + "/transformer/out/weight", uniform_fan_in(dm, d, dm, rng));
    params.add(p + "/transformer/out/bias", Matrix::Zero(1, d));
  }

  const int cin = config_.concat_width();
  if (config_.use_tcn) {
    for (int l = 0; l < config_.tcn_levels; ++l) {
      const int in = (l == 0) ? cin : dm;
      for (int k = 0; k < config_.tcn_kernel; ++k) {
        params.add(fmt::format("{}/tcn/level{}/tap{}", p, l, k),
                   uniform_fan_in(in, dm, in * config_.tcn_kernel, rng));
      }
      params.add(fmt::format("{}/tcn/level{}/bias", p, l), Matrix::Zero(1, dm));
    }
  } else {
    params.add(p + "/head/weight", uniform_fan_in(cin, dm, cin, rng));
    params.add(p + "/head/bias", Matrix::Zero(1, dm));
  }
}

void FeatureExtractor::resolve_slots(const ParameterSet& params) {
  const std::string p = kPrefix;
  auto expect = [&](const std::string& name, Eigen::Index rows, Eigen::Index cols) {
    const std::size_t s = params.slot(name);
    const Matrix& m = params.value(s);
    if (m.rows() != rows || m.cols() != cols) {
      throw ShapeError(fmt::format("parameter '{}' is {}x{}, expected {}x{}", name, m.rows(), m.cols(),
                                   rows, cols));
    }
    return s;
  };
  const int d = config_.features;
  const int w = config_.window;
  const int dm = config_.d_model;

  slots_ = Slots{};
  for (int k = 0; k < config_.conv_kernel; ++k) {
    slots_.conv_taps.push_back(expect(fmt::format("{}/conv/tap{}", p, k), d, d));
  }
  slots_.conv_bias = expect(p + "/conv/bias", 1, d);
  if (config_.use_gat) slots_.gat_attention = expect(p + "/gat/attention", 2 * w, 1);
  if (config_.use_transformer) {
    const int ff = config_.resolved_ffn_width();
    slots_.embed_w = expect(p + "/transformer/embed/weight", d, dm);
    slots_.embed_b = expect(p + "/transformer/embed/bias", 1, dm);
    for (int l = 0; l < config_.transformer_layers; ++l) {
      const std::string lp = fmt::format("{}/transformer/layer{}", p, l);
      EncoderLayerSlots s{};
      s.wq = expect(lp + "/query/weight", dm, dm);
      s.bq = expect(lp + "/query/bias", 1, dm);
      s.wk = expect(lp + "/key/weight", dm, dm);
      s.bk = expect(lp + "/key/bias", 1, dm);
      s.wv = expect(lp + "/value/weight", dm, dm);
      s.bv = expect(lp + "/value/bias", 1, dm);
      s.wo = expect(lp + "/output/weight", dm, dm);
      s.bo = expect(lp + "/output/bias", 1, dm);
      s.ln1_gamma = expect(lp + "/norm1/gamma", 1, dm);
      s.ln1_beta = expect(lp + "/norm1/beta", 1, dm);
      s.ff1_w = expect(lp + "/ff1/weight", dm, ff);
      s.ff1_b = expect(lp + "/ff1/bias", 1, ff);
      s.ff2_w = expect(lp + "/ff2/weight", ff, dm);
      s.ff2_b = expect(lp + "/ff2/bias", 1, dm);
      s.ln2_gamma = expect(lp + "/norm2/gamma", 1, dm);
      s.ln2_beta = expect(lp + "/norm2/beta", 1, dm);
      slots_.layers.push_back(s);
    }
    slots_.out_w = expect(p + "/transformer/out/weight", dm, d);
    slots_.out_b = expect(p + "/transformer/out/bias", 1, d);
  }
  const int cin = config_.concat_width();
  if (config_.use_tcn) {
    for (int l = 0; l < config_.tcn_levels; ++l) {
      const int in = (l == 0) ? cin : dm;
      std::vector<std::size_t> taps;
      for (int k = 0; k < config_.tcn_kernel; ++k) {
        taps.push_back(expect(fmt::format("{}/tcn/level{}/tap{}", p, l, k), in, dm));
      }
      slots_.tcn_taps.push_back(std::move(taps));
      slots_.tcn_bias.push_back(expect(fmt::format("{}/tcn/level{}/bias", p, l), 1, dm));
    }
  } else {
    slots_.head_w = expect(p + "/head/weight", cin, dm);
    slots_.head_b = expect(p + "/head/bias", 1, dm);
  }
}

void FeatureExtractor::check_input(const Matrix& x) const {
  if (x.rows() != config_.window || x.cols() != config_.features) {
    throw ShapeError(fmt::format("window is {}x{}, extractor expects {}x{}", x.rows(), x.cols(),
                                 config_.window, config_.features));
  }
}

Var FeatureExtractor::conv1d(Tape& tape, const ParameterSet& params, Var x) const {
  check_input(x.value());
  const int centre = config_.conv_kernel / 2;
  Var acc;
  for (int k = 0; k < config_.conv_kernel; ++k) {
    // Tap k reads x(t + k - centre); zero padding keeps the output length w.
    Var shifted = k == centre ? x : ad::shift_rows(x, centre - k);
    Var term = ad::matmul(shifted, params.var(tape, slots_.conv_taps[static_cast<std::size_t>(k)]));
    acc = acc.valid() ? ad::add(acc, term) : term;
  }
  return ad::relu(ad::add_row(acc, params.var(tape, slots_.conv_bias)));
}

Var FeatureExtractor::gat(Tape& tape, const ParameterSet& params, Var h, ExtractorTrace* trace) const {
  if (h.cols() == 0) throw ShapeError("graph attention needs at least one vertex");
  const Eigen::Index w = h.rows();
  // Vertices are the columns of h. e_ij = LeakyReLU(a_src . v_i + a_dst . v_j).
  Var a_row = ad::transpose(params.var(tape, slots_.gat_attention));
  Var a_src = ad::transpose(ad::slice_cols(a_row, 0, w));
  Var a_dst = ad::transpose(ad::slice_cols(a_row, w, w));
  Var ht = ad::transpose(h);
  Var scores = ad::outer_sum(ad::matmul(ht, a_src), ad::matmul(ht, a_dst));
  Var alpha = ad::softmax_rows(ad::leaky_relu(scores, config_.leaky_slope));
  if (trace != nullptr) trace->gat_attention = alpha.value();
  // Column i of h * alpha^T is sum_j alpha_ij v_j.
  return ad::sigmoid(ad::matmul_nt(h, alpha));
}

Var FeatureExtractor::transformer(Tape& tape, const ParameterSet& params, Var h,
                                  ExtractorTrace* trace) const {
  const int dm = config_.d_model;
  const int heads = config_.transformer_heads;
  const int dk = dm / heads;
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
  auto linear = [&](Var in, std::size_t w, std::size_t b) {
    return ad::add_row(ad::matmul(in, params.var(tape, w)), params.var(tape, b));
  };

  Var u = linear(h, slots_.embed_w, slots_.embed_b);
  u = ad::add(u, tape.constant(positional_.topRows(h.rows())));
  for (const auto& s : slots_.layers) {
    Var q = linear(u, s.wq, s.bq);
    Var k = linear(u, s.wk, s.bk);
    Var v = linear(u, s.wv, s.bv);
    std::vector<Var> head_out;
    head_out.reserve(static_cast<std::size_t>(heads));
    for (int hd = 0; hd < heads; ++hd) {
      Var qh = ad::slice_cols(q, hd * dk, dk);
      Var kh = ad::slice_cols(k, hd * dk, dk);
      Var vh = ad::slice_cols(v, hd * dk, dk);
      Var attn = ad::softmax_rows(ad::scale(ad::matmul_nt(qh, kh), inv_sqrt_dk));
      if (trace != nullptr) trace->self_attention.push_back(attn.value());
      head_out.push_back(ad::matmul(attn, vh));
    }
    Var merged = heads == 1 ? head_out.front() : ad::concat_cols(head_out);
    Var attended = linear(merged, s.wo, s.bo);
    u = ad::layer_norm_rows(ad::add(u, attended), params.var(tape, s.ln1_gamma),
                            params.var(tape, s.ln1_beta));
    Var ff = linear(ad::relu(linear(u, s.ff1_w, s.ff1_b)), s.ff2_w, s.ff2_b);
    u = ad::layer_norm_rows(ad::add(u, ff), params.var(tape, s.ln2_gamma), params.var(tape, s.ln2_beta));
  }
  return linear(u, slots_.out_w, slots_.out_b);
}

Var FeatureExtractor::fuse(Tape& tape, const ParameterSet& params, std::span<const Var> branches,
                           ExtractorTrace* trace) const {
  if (branches.empty()) throw ShapeError("fuse needs at least one branch");
  for (const Var& b : branches) {
    if (b.rows() != branches.front().rows() || b.cols() != config_.features) {
      throw ShapeError("fuse: branch outputs must all be w x d");
    }
  }
  Var concat = branches.size() == 1 ? branches.front() : ad::concat_cols(branches);
  if (concat.cols() != config_.concat_width()) {
    throw ShapeError(fmt::format("fuse: {} concatenated columns, expected {}", concat.cols(),
                                 config_.concat_width()));
  }
  if (!config_.use_tcn) {
    return ad::add_row(ad::matmul(ad::mean_rows(concat), params.var(tape, slots_.head_w)),
                       params.var(tape, slots_.head_b));
  }
  Var level = concat;
  for (int l = 0; l < config_.tcn_levels; ++l) {
    const int dilation = 1 << l;
    const auto& taps = slots_.tcn_taps[static_cast<std::size_t>(l)];
    Var acc;
    for (int k = 0; k < config_.tcn_kernel; ++k) {
      // Causal: tap k reads t - (kernel - 1 - k) * dilation.
      const int delay = (config_.tcn_kernel - 1 - k) * dilation;
      Var shifted = delay == 0 ? level : ad::shift_rows(level, delay);
      Var term = ad::matmul(shifted, params.var(tape, taps[static_cast<std::size_t>(k)]));
      acc = acc.valid() ? ad::add(acc, term) : term;
    }
    acc = ad::add_row(acc, params.var(tape, slots_.tcn_bias[static_cast<std::size_t>(l)]));
    // Linear output on the last level so z can take either sign.
    level = (l + 1 < config_.tcn_levels) ? ad::relu(acc) : acc;
    if (trace != nullptr) trace->tcn_levels.push_back(level.value());
  }
  return ad::row(level, level.rows() - 1);
}

Var FeatureExtractor::forward(Tape& tape, const ParameterSet& params, Var x, ExtractorTrace* trace) const {
  Var h_conv = conv1d(tape, params, x);
  std::vector<Var> branches{h_conv};
  if (config_.use_gat) branches.push_back(gat(tape, params, h_conv, trace));
  if (config_.use_transformer) branches.push_back(transformer(tape, params, h_conv, trace));
  if (trace != nullptr) {
    trace->h_conv = h_conv.value();
    std::size_t i = 1;
    if (config_.use_gat) trace->h_feat = branches[i++].value();
    if (config_.use_transformer) trace->h_temp = branches[i].value();
  }
  return fuse(tape, params, branches, trace);
}

LatentFeature FeatureExtractor::extract(const ParameterSet& params, const Matrix& window,
                                        ExtractorTrace* trace) const {
  Tape tape(false);
  Var z = forward(tape, params, tape.constant(window), trace);
  return {z.value()};
}

}  // namespace latad
