#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "latad/common.hpp"
#include "latad/config.hpp"
#include "latad/training.hpp"
#include "latad_testkit/oracles.hpp"

namespace latad::test {

inline std::filesystem::path fixtures_dir() { return LATAD_FIXTURES_DIR; }

/// Fresh, empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("latad_test_" + tag + "_" + std::to_string(rd()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = n(rng);
  return m;
}

inline std::vector<double> to_vec(const Matrix& m) {
  std::vector<double> v;
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) v.push_back(m(i, j));
  return v;
}

inline Matrix from_vec(const std::vector<double>& v, Eigen::Index rows, Eigen::Index cols) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = v[static_cast<std::size_t>(i * cols + j)];
  return m;
}

inline std::vector<double> row_vec(const RowVector& r) { return {r.data(), r.data() + r.size()}; }

/// w=8, d=2, d_model=4, N=2, one head: small enough for finite differences.
inline ExtractorConfig tiny_extractor(int w = 8, int d = 2) {
  ExtractorConfig c;
  c.window = w;
  c.features = d;
  c.d_model = 4;
  c.conv_kernel = 3;
  c.transformer_layers = 1;
  c.transformer_heads = 1;
  c.tcn_levels = 2;
  c.tcn_kernel = 2;
  c.seed = 11;
  return c;
}

inline GeneratorConfig tiny_generators(int w = 8, int d = 2) {
  GeneratorConfig g;
  g.count = 2;
  g.window = w;
  g.features = d;
  g.seed = 12;
  return g;
}

inline latad::testkit::OracleTriplet to_oracle(const Triplet& t) {
  latad::testkit::OracleTriplet o;
  o.anchor = row_vec(t.anchor);
  for (const auto& p : t.positives) o.positives.push_back(row_vec(p));
  for (const auto& n : t.negatives) o.negatives.push_back(row_vec(n));
  return o;
}

/// Small synthetic experiment that trains in a few seconds.
inline ExperimentConfig quick_config(const std::filesystem::path& out) {
  ExperimentConfig c = default_config();
  c.seed = 3;
  c.output_dir = out.string();
  c.dataset.kind = "synthetic";
  c.dataset.synth.features = 3;
  c.dataset.synth.train_length = 600;
  c.dataset.synth.test_length = 300;
  c.preprocess.downsample = 2;
  c.preprocess.window = 8;
  c.preprocess.train_stride = 8;
  c.model.d_model = 8;
  c.model.transformer_heads = 2;
  c.model.transformer_layers = 1;
  c.model.tcn_levels = 2;
  c.generators.count = 2;
  c.train.max_epoch = 2;
  c.scoring.k = 3;
  resolve_seeds(c);
  return c;
}

}  // namespace latad::test
