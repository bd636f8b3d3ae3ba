#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "latad/augmentation.hpp"
#include "latad_testkit/golden.hpp"
#include "test_util.hpp"

using namespace latad;
namespace tk = latad::testkit;

TEST(Adf, MatchesFrozenStatsmodelsValues) {
  const auto doc = tk::read_json(tk::golden_dir() / "adf_statsmodels.json");
  ASSERT_GE(doc["cases"].size(), 10u);
  for (const auto& c : doc["cases"]) {
    SCOPED_TRACE(c["name"].get<std::string>() + " lags " + std::to_string(c["lags"].get<int>()));
    const auto series = tk::vec_from_json(c["series"]);
    const auto r = adf_test(series, c["lags"].get<int>());
    ASSERT_TRUE(r.has_value());
    EXPECT_NEAR(r->statistic, c["statistic"].get<double>(), 1e-8);
    EXPECT_NEAR(r->p_value, c["p_value"].get<double>(), 1e-6);
    EXPECT_EQ(r->observations, c["observations"].get<int>());
  }
}

TEST(Adf, ShortOrDegenerateSeriesReturnsNothing) {
  EXPECT_FALSE(adf_test(std::vector<double>{1, 2, 3, 4}, 1).has_value());
  EXPECT_FALSE(adf_test(std::vector<double>(40, 2.0), 1).has_value());
  EXPECT_THROW(adf_test(std::vector<double>(40, 2.0), -1), ConfigError);
}

TEST(Adf, MacKinnonTails) {
  EXPECT_DOUBLE_EQ(mackinnon_p_value(5.0), 1.0);
  EXPECT_DOUBLE_EQ(mackinnon_p_value(-30.0), 0.0);
  EXPECT_LT(mackinnon_p_value(-3.43), 0.011);
  EXPECT_GT(mackinnon_p_value(-3.43), 0.009);
  EXPECT_LT(mackinnon_p_value(-2.5), mackinnon_p_value(-1.0));
}

TEST(Adf, DefaultLags) {
  EXPECT_EQ(default_adf_lags(100), 4);
  EXPECT_EQ(default_adf_lags(28), 3);
  EXPECT_EQ(default_adf_lags(1), 0);
}

TEST(Neighborhood, WhiteNoiseReachesCap) {
  std::mt19937_64 rng(31);
  const Matrix noise = test::random_matrix(2000, 2, rng);
  NeighborhoodOptions opt;
  opt.eta_max = 3;
  for (Eigen::Index c : {300, 1000, 1700}) EXPECT_EQ(find_neighborhood_eta(noise, c, 100, opt), 3);
}

TEST(Neighborhood, RandomWalkStaysAtOne) {
  NeighborhoodOptions opt;
  int ones = 0;
  for (int seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(100 + static_cast<std::uint64_t>(seed));
    Matrix walk = test::random_matrix(1000, 1, rng);
    for (Eigen::Index t = 1; t < walk.rows(); ++t) walk(t, 0) += walk(t - 1, 0);
    ones += find_neighborhood_eta(walk, 500, 100, opt) == 1 ? 1 : 0;
  }
  EXPECT_GE(ones, 18);
}

TEST(Neighborhood, CapOfOneAlwaysOne) {
  std::mt19937_64 rng(32);
  NeighborhoodOptions opt;
  opt.eta_max = 1;
  EXPECT_EQ(find_neighborhood_eta(test::random_matrix(500, 2, rng), 250, 50, opt), 1);
  opt.eta_max = 0;
  EXPECT_THROW(find_neighborhood_eta(test::random_matrix(500, 2, rng), 250, 50, opt), ConfigError);
}

TEST(Neighborhood, TooShortForAdfReturnsOne) {
  std::mt19937_64 rng(33);
  NeighborhoodOptions opt;
  EXPECT_EQ(find_neighborhood_eta(test::random_matrix(6, 1, rng), 3, 2, opt), 1);
}

TEST(Neighborhood, BoundsClipToSeries) {
  const NeighborhoodSpec s{5, 2, 10, 0.01};
  const auto [first, last] = s.bounds(100);
  EXPECT_EQ(first, 0);
  EXPECT_EQ(last, 16);
}

TEST(PositiveSampling, SigmaFloorConcentratesAtCentre) {
  std::mt19937_64 rng(34);
  const auto c = sample_positive_centers(1000, 500, 1, 1, 2000, rng);
  std::size_t near = 0;
  for (auto v : c) near += std::abs(v - 500) <= 3 ? 1 : 0;
  EXPECT_GT(near, 1990u);
}

TEST(PositiveSampling, CentresFollowNormalByKolmogorovSmirnov) {
  std::mt19937_64 rng(35);
  const int eta = 2;
  const int delta = 50;
  const double sigma = eta * delta;
  auto c = sample_positive_centers(100000, 50000, eta, delta, 10000, rng);
  std::sort(c.begin(), c.end());
  double d = 0.0;
  const double n = static_cast<double>(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    const double f = 0.5 * std::erfc(-(static_cast<double>(c[i]) - 50000.0) / (sigma * std::sqrt(2.0)));
    d = std::max({d, std::abs(f - static_cast<double>(i + 1) / n), std::abs(f - static_cast<double>(i) / n)});
  }
  // 1% critical value of the one-sample KS statistic.
  EXPECT_LT(d, 1.628 / std::sqrt(n));
}

TEST(PositiveSampling, WindowsStayInsideSeries) {
  std::mt19937_64 rng(36);
  const Matrix s = test::random_matrix(60, 2, rng);
  const auto w = sample_positives(s, 2, 3, 10, 50, rng);
  ASSERT_EQ(w.size(), 50u);
  for (const auto& win : w) {
    EXPECT_GE(win.start_index, 0);
    EXPECT_LE(win.start_index + 10, 60);
    EXPECT_EQ(win.data, s.middleRows(win.start_index, 10));
  }
  EXPECT_EQ(window_start_for_center(0, 10, 60), 0);
  EXPECT_EQ(window_start_for_center(59, 10, 60), 50);
  EXPECT_EQ(window_center(20, 10), 25);
}

namespace {

GeneratorConfig gen_config() {
  GeneratorConfig g;
  g.count = 3;
  g.window = 6;
  g.features = 2;
  g.seed = 41;
  return g;
}

}  // namespace

TEST(MaskGenerator, EntriesInOpenUnitInterval) {
  ParameterSet p;
  MaskGenerators gen(gen_config(), p);
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix m = gen.generate_mask(p, test::random_matrix(6, 2, rng, 5.0), trial % 3);
    EXPECT_GT(m.minCoeff(), 0.0);
    EXPECT_LT(m.maxCoeff(), 1.0);
  }
}

TEST(MaskGenerator, ZeroParametersGiveHalf) {
  ParameterSet p;
  MaskGenerators gen(gen_config(), p);
  for (std::size_t s = 0; s < p.size(); ++s) p.value(s).setZero();
  std::mt19937_64 rng(43);
  EXPECT_EQ(gen.generate_mask(p, test::random_matrix(6, 2, rng), 1), Matrix::Constant(6, 2, 0.5));
}

TEST(MaskGenerator, MatchesTwoLayerOracle) {
  ParameterSet p;
  const GeneratorConfig cfg = gen_config();
  MaskGenerators gen(cfg, p);
  std::mt19937_64 rng(44);
  for (int i = 0; i < cfg.count; ++i) {
    const std::string pre = "generator/" + std::to_string(i) + "/";
    p.value(pre + "b1") = test::random_matrix(1, cfg.resolved_hidden(), rng);
    p.value(pre + "b2") = test::random_matrix(1, 12, rng);
    const Matrix x = test::random_matrix(6, 2, rng);
    const Matrix expect = tk::oracle_mask(x, p.value(pre + "w1"), p.value(pre + "b1"), p.value(pre + "w2"),
                                          p.value(pre + "b2"), cfg.leaky_slope);
    EXPECT_LT((gen.generate_mask(p, x, i) - expect).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(MaskGenerator, NegativeLimits) {
  ParameterSet p;
  MaskGenerators gen(gen_config(), p);
  std::mt19937_64 rng(45);
  const Window x{test::random_matrix(6, 2, rng), 0, std::nullopt};
  p.value("generator/0/w2").setZero();
  p.value("generator/0/b2").setConstant(60.0);
  p.value("generator/1/w2").setZero();
  p.value("generator/1/b2").setConstant(-60.0);
  const auto neg = gen.generate_negatives(p, x);
  ASSERT_EQ(neg.size(), 3u);
  EXPECT_LT((neg[0].data - x.data).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT(neg[1].data.cwiseAbs().maxCoeff(), 1e-20);
}

TEST(MaskGenerator, DistinctGeneratorsAndDiversity) {
  ParameterSet p;
  MaskGenerators gen(gen_config(), p);
  std::mt19937_64 rng(46);
  const Matrix x = test::random_matrix(6, 2, rng);
  EXPECT_NE(gen.generate_mask(p, x, 0), gen.generate_mask(p, x, 1));
  EXPECT_GT(gen.min_pairwise_mask_distance(p, x), 0.0);
  EXPECT_THROW(gen.generate_mask(p, x, 3), ConfigError);
  EXPECT_THROW(gen.generate_mask(p, Matrix::Zero(5, 2), 0), ShapeError);
}

TEST(MaskGenerator, DefaultHiddenWidth) {
  GeneratorConfig g = gen_config();
  EXPECT_EQ(g.resolved_hidden(), 6);
  g.hidden = 9;
  EXPECT_EQ(g.resolved_hidden(), 9);
}
