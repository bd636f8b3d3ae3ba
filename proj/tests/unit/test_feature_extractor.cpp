#include <gtest/gtest.h>

#include <cmath>

#include "latad/feature_extractor.hpp"
#include "latad_testkit/oracles.hpp"
#include "test_util.hpp"

using namespace latad;
namespace tk = latad::testkit;

namespace {

ExtractorConfig small_config(int w = 12, int d = 3) {
  ExtractorConfig c;
  c.window = w;
  c.features = d;
  c.d_model = 8;
  c.conv_kernel = 3;
  c.transformer_layers = 2;
  c.transformer_heads = 2;
  c.tcn_levels = 3;
  c.tcn_kernel = 3;
  c.seed = 21;
  return c;
}

Matrix run_conv(const FeatureExtractor& fx, const ParameterSet& p, const Matrix& x) {
  ad::Tape t(false);
  return fx.conv1d(t, p, t.constant(x)).value();
}

}  // namespace

TEST(Conv1d, ZeroInputGivesRectifiedBias) {
  const ExtractorConfig cfg = small_config();
  ParameterSet p;
  FeatureExtractor fx(cfg, p);
  p.value("extractor/conv/bias") << 0.5, -1.0, 2.0;
  const Matrix out = run_conv(fx, p, Matrix::Zero(cfg.window, cfg.features));
  for (Eigen::Index t = 0; t < out.rows(); ++t) {
    EXPECT_DOUBLE_EQ(out(t, 0), 0.5);
    EXPECT_DOUBLE_EQ(out(t, 1), 0.0);
    EXPECT_DOUBLE_EQ(out(t, 2), 2.0);
  }
}

TEST(Conv1d, CentreTapIdentityIsRelu) {
  const ExtractorConfig cfg = small_config();
  ParameterSet p;
  FeatureExtractor fx(cfg, p);
  p.value("extractor/conv/tap0").setZero();
  p.value("extractor/conv/tap1") = Matrix::Identity(3, 3);
  p.value("extractor/conv/tap2").setZero();
  std::mt19937_64 rng(2);
  const Matrix x = test::random_matrix(cfg.window, cfg.features, rng);
  EXPECT_EQ(run_conv(fx, p, x), x.cwiseMax(0.0));
}

TEST(Conv1d, MatchesSlidingDotProductOracle) {
  ExtractorConfig cfg = small_config();
  cfg.conv_kernel = 5;
  ParameterSet p;
  FeatureExtractor fx(cfg, p);
  std::mt19937_64 rng(3);
  p.value("extractor/conv/bias") = test::random_matrix(1, 3, rng);
  std::vector<Matrix> taps;
  for (int k = 0; k < 5; ++k) taps.push_back(p.value("extractor/conv/tap" + std::to_string(k)));
  for (int trial = 0; trial < 5; ++trial) {
    const Matrix x = test::random_matrix(cfg.window, cfg.features, rng);
    const Matrix expect = tk::oracle_conv1d(x, taps, p.value("extractor/conv/bias").row(0));
    EXPECT_LT((run_conv(fx, p, x) - expect).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Conv1d, WrongShapeThrows) {
  const ExtractorConfig cfg = small_config();
  ParameterSet p;
  FeatureExtractor fx(cfg, p);
  EXPECT_THROW(run_conv(fx, p, Matrix::Zero(cfg.window, 2)), ShapeError);
  EXPECT_THROW(fx.extract(p, Matrix::Zero(cfg.window + 1, 3)), ShapeError);
}

TEST(Gat, SingleVertexAttendsToItself) {
  const ExtractorConfig cfg = small_config(6, 1);
  ParameterSet p;
  FeatureExtractor fx(cfg, p);
  std::mt19937_64 rng(4);
  const Matrix h = test::random_matrix(6, 1, rng);
  ad::Tape t(false);
  ExtractorTrace trace;
  const Matrix out = fx.gat(t, p, t.constant(h), &trace).value();
  EXPECT_DOUBLE_EQ(trace.gat_attention(0, 0), 1.0);
  for (int i = 0; i < 6; ++i) EXPECT_NEAR(out(i, 0), 1.0 / (1.0 + std::exp(-h(i, 0))), 1e-15);
}

TEST(Gat, EqualScoresGiveUniformWeights) {
  const ExtractorConfig cfg = small_config(6, 4);
  ParameterSet p;
  FeatureExtractor fx(cfg, p);
  p.value("extractor/gat/attention").setZero();
  std::mt19937_64 rng(5);
  ad::Tape t(false);
  ExtractorTrace trace;
  fx.gat(t, p, t.constant(test::random_matrix(6, 4, rng)), &trace);
  EXPECT_LT((trace.gat_attention.array() - 0.25).abs().maxCoeff(), 1e-15);
}

TEST(Gat, MatchesDirectEvaluationAndRowsSumToOne) {
  const ExtractorConfig cfg = small_config(8, 3);
  ParameterSet p;
  FeatureExtractor fx(cfg, p);
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix h = test::random_matrix(8, 3, rng);
    ad::Tape t(false);
    ExtractorTrace trace;
    const Matrix out = fx.gat(t, p, t.constant(h), &trace).value();
    const auto o = tk::oracle_gat(h, p.value("extractor/gat/attention"), cfg.leaky_slope);
    EXPECT_LT((trace.gat_attention - o.alpha).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((out - o.out).cwiseAbs().maxCoeff(), 1e-12);
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(trace.gat_attention.row(i).sum(), 1.0, 1e-6);
  }
}

TEST(Transformer, SingleStepAttentionIsOne) {
  const ExtractorConfig cfg = small_config(1, 2);
  ParameterSet p;
  FeatureExtractor fx(cfg, p);
  ExtractorTrace trace;
  std::mt19937_64 rng(7);
  fx.extract(p, test::random_matrix(1, 2, rng), &trace);
  ASSERT_EQ(trace.self_attention.size(), 4u);
  for (const auto& a : trace.self_attention) EXPECT_DOUBLE_EQ(a(0, 0), 1.0);
}

TEST(Transformer, AttentionRowsSumToOne) {
  const ExtractorConfig cfg = small_config();
  ParameterSet p;
  FeatureExtractor fx(cfg, p);
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    ExtractorTrace trace;
    fx.extract(p, test::random_matrix(cfg.window, cfg.features, rng, 3.0), &trace);
    for (const auto& a : trace.self_attention) {
      ASSERT_EQ(a.rows(), cfg.window);
      EXPECT_LT((a.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-6);
    }
  }
}

TEST(Transformer, SingleHeadMatchesScaledDotProductOracle) {
  ExtractorConfig cfg = small_config(4, 2);
  cfg.transformer_heads = 1;
  cfg.transformer_layers = 1;
  ParameterSet p;
  FeatureExtractor fx(cfg, p);
  std::mt19937_64 rng(9);
  const Matrix h = test::random_matrix(4, 2, rng);
  ExtractorTrace trace;
  ad::Tape t(false);
  fx.transformer(t, p, t.constant(h), &trace);
  // Rebuild Q and K from the parameters and check the recorded weights.
  const std::string l = "extractor/transformer/layer0/";
  const Matrix u = (h * p.value("extractor/transformer/embed/weight")).rowwise() +
                   RowVector(p.value("extractor/transformer/embed/bias").row(0));
  const Matrix pe = sinusoidal_positions(4, cfg.d_model);
  const Matrix x = u + pe;
  const Matrix q = (x * p.value(l + "query/weight")).rowwise() + RowVector(p.value(l + "query/bias").row(0));
  const Matrix k = (x * p.value(l + "key/weight")).rowwise() + RowVector(p.value(l + "key/bias").row(0));
  const Matrix v = (x * p.value(l + "value/weight")).rowwise() + RowVector(p.value(l + "value/bias").row(0));
  const auto [out, weights] = tk::oracle_attention(q, k, v);
  ASSERT_EQ(trace.self_attention.size(), 1u);
  EXPECT_LT((trace.self_attention[0] - weights).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((trace.self_attention[0] * v - out).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Transformer, HeadsMustDivideModelWidth) {
  ExtractorConfig cfg = small_config();
  cfg.transformer_heads = 3;
  ParameterSet p;
  EXPECT_THROW(FeatureExtractor(cfg, p), ConfigError);
}

TEST(Tcn, ReceptiveFieldArithmetic) {
  ExtractorConfig cfg = small_config();
  cfg.tcn_levels = 4;
  cfg.tcn_kernel = 3;
  EXPECT_EQ(cfg.tcn_receptive_field(), 31);
}

TEST(Tcn, RowsOutsideReceptiveFieldDoNotMatter) {
  ExtractorConfig cfg = small_config(40, 2);
  cfg.tcn_levels = 4;
  cfg.tcn_kernel = 3;
  ParameterSet p;
  FeatureExtractor fx(cfg, p);
  std::mt19937_64 rng(10);
  const Matrix fused = test::random_matrix(40, cfg.concat_width(), rng);
  auto z_of = [&](const Matrix& in) {
    ad::Tape t(false);
    std::vector<ad::Var> b{t.constant(in.leftCols(2)), t.constant(in.middleCols(2, 2)), t.constant(in.rightCols(2))};
    return fx.fuse(t, p, b).value();
  };
  const Matrix z0 = z_of(fused);
  Matrix outside = fused;
  outside.row(40 - 32).array() += 5.0;  // just outside the last 31 rows
  outside.row(0).array() -= 3.0;
  EXPECT_EQ(z_of(outside), z0);
  Matrix inside = fused;
  inside.row(40 - 31).array() += 5.0;
  EXPECT_GT((z_of(inside) - z0).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Tcn, CausalLevels) {
  ExtractorConfig cfg = small_config(16, 2);
  ParameterSet p;
  FeatureExtractor fx(cfg, p);
  std::mt19937_64 rng(11);
  const Matrix fused = test::random_matrix(16, cfg.concat_width(), rng);
  auto levels = [&](const Matrix& in) {
    ad::Tape t(false);
    ExtractorTrace trace;
    std::vector<ad::Var> b{t.constant(in.leftCols(2)), t.constant(in.middleCols(2, 2)), t.constant(in.rightCols(2))};
    fx.fuse(t, p, b, &trace);
    return trace.tcn_levels;
  };
  const auto base = levels(fused);
  Matrix changed = fused;
  changed.row(10).array() += 4.0;
  const auto after = levels(changed);
  for (std::size_t l = 0; l < base.size(); ++l) {
    EXPECT_EQ(base[l].topRows(10), after[l].topRows(10)) << "level " << l << " saw the future";
  }
}

TEST(Fuse, ConcatenationWidthAndShapeChecks) {
  const ExtractorConfig cfg = small_config();
  EXPECT_EQ(cfg.concat_width(), 3 * cfg.features);
  ParameterSet p;
  FeatureExtractor fx(cfg, p);
  ad::Tape t(false);
  std::vector<ad::Var> bad{t.constant(Matrix::Zero(cfg.window, 3)), t.constant(Matrix::Zero(cfg.window, 2)),
                           t.constant(Matrix::Zero(cfg.window, 3))};
  EXPECT_THROW(fx.fuse(t, p, bad), ShapeError);
  std::vector<ad::Var> two{t.constant(Matrix::Zero(cfg.window, 3)), t.constant(Matrix::Zero(cfg.window, 3))};
  EXPECT_THROW(fx.fuse(t, p, two), ShapeError);
}

TEST(Extract, DeterministicAndSeedDependent) {
  const ExtractorConfig cfg = small_config();
  ParameterSet a;
  ParameterSet b;
  FeatureExtractor fa(cfg, a);
  FeatureExtractor fb(cfg, b);
  EXPECT_TRUE(a == b);
  std::mt19937_64 rng(12);
  const Matrix x = test::random_matrix(cfg.window, cfg.features, rng);
  const auto z1 = fa.extract(a, x).z;
  EXPECT_EQ(z1, fa.extract(a, x).z);
  EXPECT_EQ(z1, fb.extract(b, x).z);
  EXPECT_EQ(z1.size(), cfg.d_model);
  ExtractorConfig other = cfg;
  other.seed = 22;
  ParameterSet c;
  FeatureExtractor fc(other, c);
  EXPECT_NE(z1, fc.extract(c, x).z);
}

TEST(Extract, AblationsDropBranches) {
  std::mt19937_64 rng(13);
  const Matrix x = test::random_matrix(12, 3, rng);
  for (int mask = 0; mask < 8; ++mask) {
    ExtractorConfig cfg = small_config();
    cfg.use_gat = (mask & 1) != 0;
    cfg.use_transformer = (mask & 2) != 0;
    cfg.use_tcn = (mask & 4) != 0;
    ParameterSet p;
    FeatureExtractor fx(cfg, p);
    EXPECT_EQ(p.contains("extractor/gat/attention"), cfg.use_gat);
    EXPECT_EQ(p.contains("extractor/transformer/embed/weight"), cfg.use_transformer);
    EXPECT_EQ(p.contains("extractor/head/weight"), !cfg.use_tcn);
    const auto z = fx.extract(p, x).z;
    EXPECT_EQ(z.size(), cfg.d_model);
    EXPECT_TRUE(z.allFinite());
  }
}

TEST(Extract, BindRejectsMismatchedParameters) {
  const ExtractorConfig cfg = small_config();
  ParameterSet p;
  FeatureExtractor fx(cfg, p);
  ExtractorConfig wider = cfg;
  wider.features = 4;
  EXPECT_THROW(FeatureExtractor::bind(wider, p), ShapeError);
  EXPECT_NO_THROW(FeatureExtractor::bind(cfg, p));
}

TEST(Positions, SinusoidalTable) {
  const Matrix pe = sinusoidal_positions(3, 4);
  EXPECT_DOUBLE_EQ(pe(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(pe(0, 1), 1.0);
  EXPECT_DOUBLE_EQ(pe(1, 0), std::sin(1.0));
  EXPECT_DOUBLE_EQ(pe(1, 2), std::sin(0.01));
}
