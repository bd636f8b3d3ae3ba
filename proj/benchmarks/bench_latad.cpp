#include <benchmark/benchmark.h>

#include <random>

#include "latad/diagnosis.hpp"
#include "latad/evaluation.hpp"
#include "latad/preprocessing.hpp"
#include "latad/scoring.hpp"
#include "latad/training.hpp"

using namespace latad;

namespace {

Matrix noise(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = n(rng);
  return m;
}

ExtractorConfig extractor_config(int w, int d, int d_model) {
  ExtractorConfig c;
  c.window = w;
  c.features = d;
  c.d_model = d_model;
  c.transformer_heads = 4;
  c.seed = 1;
  return c;
}

ReferenceModel unit_centers(int k, int dim) {
  ReferenceModel ref;
  ref.centers = noise(k, dim, 2);
  for (Eigen::Index i = 0; i < ref.centers.rows(); ++i) ref.centers.row(i).normalize();
  return ref;
}

Labels segmented_labels(std::size_t n) {
  Labels y(n, 0);
  for (std::size_t s = 50; s + 40 < n; s += 500)
    for (std::size_t t = s; t < s + 40; ++t) y[t] = 1;
  return y;
}

}  // namespace

static void BM_ExtractorForward(benchmark::State& state) {
  const int w = static_cast<int>(state.range(0));
  const ExtractorConfig cfg = extractor_config(w, 5, 32);
  ParameterSet p;
  FeatureExtractor fx(cfg, p);
  const Matrix x = noise(w, 5, 3);
  for (auto _ : state) benchmark::DoNotOptimize(fx.extract(p, x).z);
}
BENCHMARK(BM_ExtractorForward)->Arg(8)->Arg(32)->Arg(100);

static void BM_InputGradient(benchmark::State& state) {
  const ExtractorConfig cfg = extractor_config(32, 5, 32);
  ParameterSet p;
  FeatureExtractor fx(cfg, p);
  const ReferenceModel ref = unit_centers(10, 32);
  const Matrix x = noise(32, 5, 4);
  for (auto _ : state) benchmark::DoNotOptimize(input_gradients(x, fx, p, ref).g_norm);
}
BENCHMARK(BM_InputGradient);

static void BM_TrainingBatch(benchmark::State& state) {
  TrainConfig tc;
  tc.seed = 5;
  ExtractorConfig ec = extractor_config(16, 5, 16);
  ec.transformer_heads = 2;
  GeneratorConfig gc;
  gc.count = 4;
  gc.window = 16;
  gc.features = 5;
  gc.seed = 6;
  const LatadModel model = LatadModel::create(ec, gc, tc);
  const Matrix series = noise(400, 5, 7);
  const std::vector<Eigen::Index> starts{0, 40, 80, 120, 160, 200, 240, 280};
  const std::vector<int> etas(starts.size(), 1);
  std::vector<Matrix> grads = model.params.zero_gradients();
  for (auto _ : state) {
    std::mt19937_64 rng(8);
    benchmark::DoNotOptimize(batch_loss_and_gradients(series, model, starts, etas, tc, rng, &grads).total);
  }
}
BENCHMARK(BM_TrainingBatch);

static void BM_SphericalKMeans(benchmark::State& state) {
  const Matrix pts = noise(state.range(0), 32, 9);
  for (auto _ : state) benchmark::DoNotOptimize(spherical_kmeans(pts, 10, 100));
}
BENCHMARK(BM_SphericalKMeans)->Arg(200)->Arg(2000);

static void BM_AnomalyScore(benchmark::State& state) {
  const ReferenceModel ref = unit_centers(static_cast<int>(state.range(0)), 32);
  const RowVector z = noise(1, 32, 10);
  for (auto _ : state) benchmark::DoNotOptimize(anomaly_score(z, ref));
}
BENCHMARK(BM_AnomalyScore)->Arg(1)->Arg(10)->Arg(100);

static void BM_PointAdjust(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Labels y = segmented_labels(n);
  const auto segs = segments_from_labels(y);
  std::mt19937_64 rng(11);
  std::bernoulli_distribution b(0.05);
  Labels yh(n);
  for (auto& v : yh) v = b(rng) ? 1 : 0;
  for (auto _ : state) benchmark::DoNotOptimize(pa_percent_k(yh, segs, 50));
}
BENCHMARK(BM_PointAdjust)->Arg(10000)->Arg(450000);

static void BM_ThresholdSearch(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Labels y = segmented_labels(n);
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> s(n), val(200);
  for (auto& v : s) v = u(rng);
  for (auto& v : val) v = u(rng);
  for (auto _ : state) benchmark::DoNotOptimize(search_threshold(s, y, val, F1Metric::f1_pa_k(50)).threshold);
}
BENCHMARK(BM_ThresholdSearch)->Arg(2000)->Arg(20000);

static void BM_Preprocess(benchmark::State& state) {
  TimeSeriesDataset train, test;
  train.values = noise(20000, 10, 13);
  test.values = noise(10000, 10, 14);
  test.role = SplitRole::test;
  for (Eigen::Index t = 0; t < train.length(); ++t) train.timestamps.push_back(static_cast<double>(t));
  for (Eigen::Index t = 0; t < test.length(); ++t) test.timestamps.push_back(static_cast<double>(t));
  PreprocessConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(preprocess(train, test, cfg).train.values);
}
BENCHMARK(BM_Preprocess);
BENCHMARK_MAIN();
