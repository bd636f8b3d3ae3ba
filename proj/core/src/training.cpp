#include "latad/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "latad/preprocessing.hpp"

namespace latad {

void TrainConfig::validate() const {
  if (lambda < 0.0) throw ConfigError("lambda must be >= 0");
  if (margin_min < 0.0 || margin_max < margin_min) throw ConfigError("invalid margin range");
  if (learning_rate <= 0.0) throw ConfigError("learning_rate must be > 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (max_epoch < 0) throw ConfigError("max_epoch must be >= 0");
  if (window_stride < 1) throw ConfigError("window_stride must be >= 1");
}

double cosine_distance(const RowVector& u, const RowVector& v) {
  const double nu = u.norm();
  const double nv = v.norm();
  if (nu == 0.0 || nv == 0.0) throw Error("cosine distance of a zero vector is undefined");
  return 0.5 * (1.0 - u.dot(v) / (nu * nv));
}

namespace {

RowVector log_softmax(const RowVector& z) {
  const double m = z.maxCoeff();
  const double lse = m + std::log((z.array() - m).exp().sum());
  return (z.array() - lse).matrix();
}

void require_counts(const Triplet& t, std::size_t margins) {
  if (t.positives.size() != t.negatives.size() || t.positives.empty()) {
    throw ShapeError("triplet needs equal, nonzero positive and negative counts");
  }
  if (margins != 0 && margins != t.positives.size()) throw ShapeError("one margin per negative required");
}

}  // namespace

double compactness_loss(const TripletBatch& batch) {
  if (batch.empty()) return 0.0;
  double total = 0.0;
  for (const auto& t : batch) {
    require_counts(t, 0);
    double s = 0.0;
    for (const auto& p : t.positives) s += cosine_distance(t.anchor, p);
    total += s / static_cast<double>(t.positives.size());
  }
  return total / static_cast<double>(batch.size());
}

double separateness_loss(const TripletBatch& batch, std::span<const double> margins) {
  if (batch.empty()) return 0.0;
  double total = 0.0;
  for (const auto& t : batch) {
    require_counts(t, margins.size());
    double s = 0.0;
    for (std::size_t i = 0; i < t.positives.size(); ++i) {
      const double gap = cosine_distance(t.anchor, t.positives[i]) - cosine_distance(t.anchor, t.negatives[i]);
      s += std::max(0.0, gap + margins[i]);
    }
    total += s / static_cast<double>(t.positives.size());
  }
  return total / static_cast<double>(batch.size());
}

double kld_regularizer(const TripletBatch& batch) {
  if (batch.empty()) return 0.0;
  double total = 0.0;
  for (const auto& t : batch) {
    require_counts(t, 0);
    double s = 0.0;
    for (std::size_t i = 0; i < t.positives.size(); ++i) {
      const RowVector lp = log_softmax(t.positives[i]);
      const RowVector lq = log_softmax(t.negatives[i]);
      s += (lp.array().exp() * (lp - lq).array()).sum();
    }
    total += s / static_cast<double>(t.positives.size());
  }
  return total / static_cast<double>(batch.size());
}

double combine_losses(double comp, double sep, double reg, const TrainConfig& config) {
  return (config.use_comp ? comp : 0.0) + sep + (config.use_reg ? config.lambda * reg : 0.0);
}

LossTerms total_loss(const TripletBatch& batch, std::span<const double> margins, const TrainConfig& config) {
  LossTerms t;
  t.comp = config.use_comp ? compactness_loss(batch) : 0.0;
  t.sep = separateness_loss(batch, margins);
  t.reg = config.use_reg ? kld_regularizer(batch) : 0.0;
  t.total = combine_losses(t.comp, t.sep, t.reg, config);
  if (!std::isfinite(t.total)) throw DivergenceError("non-finite loss");
  return t;
}

std::vector<double> draw_margins(int count, const TrainConfig& config) {
  std::mt19937_64 rng(config.seed ^ 0x6d617267696e73ULL);
  std::uniform_real_distribution<double> dist(config.margin_min, config.margin_max);
  std::vector<double> margins(static_cast<std::size_t>(count));
  for (auto& m : margins) m = dist(rng);
  return margins;
}

ad::Var triplet_objective(ad::Var anchor, std::span<const ad::Var> positives,
                          std::span<const ad::Var> negatives, std::span<const double> margins,
                          const TrainConfig& config, LossTerms* terms) {
  if (positives.size() != negatives.size() || positives.empty() || margins.size() != positives.size()) {
    throw ShapeError("triplet objective needs N positives, N negatives and N margins");
  }
  const double inv_n = 1.0 / static_cast<double>(positives.size());
  ad::Var comp, sep, reg;
  auto accumulate = [](ad::Var& acc, ad::Var v) { acc = acc.valid() ? ad::add(acc, v) : v; };
  for (std::size_t i = 0; i < positives.size(); ++i) {
    ad::Var d_pos = ad::cosine_distance(anchor, positives[i]);
    ad::Var d_neg = ad::cosine_distance(anchor, negatives[i]);
    accumulate(comp, d_pos);
    accumulate(sep, ad::relu(ad::add_scalar(ad::sub(d_pos, d_neg), margins[i])));
    if (config.use_reg) {
      ad::Var lp = ad::log_softmax_rows(positives[i]);
      ad::Var lq = ad::log_softmax_rows(negatives[i]);
      accumulate(reg, ad::sum(ad::hadamard(ad::exp(lp), ad::sub(lp, lq))));
    }
  }
  comp = ad::scale(comp, inv_n);
  sep = ad::scale(sep, inv_n);
  ad::Var total = sep;
  if (config.use_comp) total = ad::add(total, comp);
  if (config.use_reg) {
    reg = ad::scale(reg, inv_n);
    total = ad::add(total, ad::scale(reg, config.lambda));
  }
  if (terms != nullptr) {
    terms->comp = config.use_comp ? comp.scalar() : 0.0;
    terms->sep = sep.scalar();
    terms->reg = config.use_reg ? reg.scalar() : 0.0;
    terms->total = total.scalar();
  }
  return total;
}

LatadModel LatadModel::create(const ExtractorConfig& extractor, const GeneratorConfig& generators,
                              const TrainConfig& train) {
  if (extractor.window != generators.window || extractor.features != generators.features) {
    throw ConfigError("extractor and generators disagree on window shape");
  }
  LatadModel model;
  model.extractor_config = extractor;
  model.generator_config = generators;
  FeatureExtractor(extractor, model.params);
  MaskGenerators(generators, model.params);
  model.margins = draw_margins(generators.count, train);
  return model;
}

LossTerms batch_loss_and_gradients(const Matrix& series, const LatadModel& model,
                                   std::span<const Eigen::Index> anchor_starts, std::span<const int> etas,
                                   const TrainConfig& config, std::mt19937_64& rng,
                                   std::vector<Matrix>* grads) {
  if (anchor_starts.size() != etas.size()) throw ShapeError("one eta per anchor required");
  const FeatureExtractor fx = model.extractor();
  const MaskGenerators gen = model.generators();
  const int w = model.extractor_config.window;
  const int n = gen.count();
  const double inv_b = 1.0 / static_cast<double>(anchor_starts.size());

  LossTerms mean;
  for (std::size_t a = 0; a < anchor_starts.size(); ++a) {
    const Eigen::Index start = anchor_starts[a];
    const auto centers =
        sample_positive_centers(series.rows(), window_center(start, w), etas[a], w, n, rng);

    ad::Tape tape;
    ad::Var x = tape.constant(series.middleRows(start, w));
    ad::Var z = fx.forward(tape, model.params, x);
    std::vector<ad::Var> pos;
    std::vector<ad::Var> neg;
    for (int i = 0; i < n; ++i) {
      const Eigen::Index ps = window_start_for_center(centers[static_cast<std::size_t>(i)], w, series.rows());
      pos.push_back(fx.forward(tape, model.params, tape.constant(series.middleRows(ps, w))));
      neg.push_back(fx.forward(tape, model.params, gen.negative(tape, model.params, x, i)));
    }
    LossTerms terms;
    ad::Var loss = triplet_objective(z, pos, neg, model.margins, config, &terms);
    if (!std::isfinite(terms.total)) {
      throw DivergenceError(fmt::format("non-finite loss at anchor row {}", start));
    }
    if (grads != nullptr) tape.backward(ad::scale(loss, inv_b), grads);
    mean.comp += terms.comp * inv_b;
    mean.sep += terms.sep * inv_b;
    mean.reg += terms.reg * inv_b;
    mean.total += terms.total * inv_b;
  }
  return mean;
}

TrainHistory fit(const Matrix& series, LatadModel& model, const TrainConfig& config,
                 const EpochCallback& on_epoch) {
  config.validate();
  const int w = model.extractor_config.window;
  if (series.cols() != model.extractor_config.features) {
    throw ShapeError("training series feature count does not match the model");
  }
  if (series.rows() < w) throw ShapeError("training series shorter than one window");
  if (static_cast<int>(model.margins.size()) != model.generator_config.count) {
    throw ConfigError("model margins do not match generator count");
  }

  const std::size_t count = prep::window_count(series.rows(), w, config.window_stride);
  std::vector<Eigen::Index> starts(count);
  std::vector<int> etas(count);
  for (std::size_t i = 0; i < count; ++i) {
    starts[i] = static_cast<Eigen::Index>(i) * config.window_stride;
    etas[i] = find_neighborhood_eta(series, window_center(starts[i], w), w, config.neighborhood);
  }

  AdamOptions adam_opts;
  adam_opts.learning_rate = config.learning_rate;
  adam_opts.clip_norm = config.clip_norm;
  Adam adam(model.params, adam_opts);
  std::mt19937_64 rng(config.seed);
  const Matrix probe = series.topRows(w);
  const MaskGenerators gen = model.generators();

  TrainHistory history;
  std::vector<std::size_t> order(count);
  for (int epoch = 1; epoch <= config.max_epoch; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    EpochRecord record;
    record.epoch = epoch;
    for (std::size_t b = 0; b < count; b += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(count, b + static_cast<std::size_t>(config.batch_size));
      std::vector<Eigen::Index> batch_starts;
      std::vector<int> batch_etas;
      for (std::size_t k = b; k < end; ++k) {
        batch_starts.push_back(starts[order[k]]);
        batch_etas.push_back(etas[order[k]]);
      }
      std::vector<Matrix> grads = model.params.zero_gradients();
      const LossTerms terms =
          batch_loss_and_gradients(series, model, batch_starts, batch_etas, config, rng, &grads);
      const ParameterSet last_good = model.params;
      adam.step(model.params, grads);
      if (!model.params.all_finite()) {
        model.params = last_good;
        throw DivergenceError(fmt::format("non-finite parameters after epoch {} batch {}", epoch, b));
      }
      const double weight = static_cast<double>(end - b) / static_cast<double>(count);
      record.mean.comp += terms.comp * weight;
      record.mean.sep += terms.sep * weight;
      record.mean.reg += terms.reg * weight;
      record.mean.total += terms.total * weight;
    }
    record.mask_diversity = gen.min_pairwise_mask_distance(model.params, probe);
    history.epochs.push_back(record);
    if (on_epoch) on_epoch(record);
  }
  return history;
}

std::vector<LatentFeature> extract_features(const FeatureExtractor& extractor, const ParameterSet& params,
                                            std::span<const Window> windows) {
  std::vector<LatentFeature> out;
  out.reserve(windows.size());
  for (const auto& w : windows) out.push_back(extractor.extract(params, w.data));
  return out;
}

}  // namespace latad
