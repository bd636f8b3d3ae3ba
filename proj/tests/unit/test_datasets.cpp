#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <functional>

#include "latad/datasets.hpp"
#include "latad_testkit/golden.hpp"
#include "test_util.hpp"

using namespace latad;
namespace fs = std::filesystem;
namespace tk = latad::testkit;

namespace {

std::size_t ones(const TimeSeriesDataset& d) {
  return static_cast<std::size_t>(std::count(d.labels->begin(), d.labels->end(), 1));
}

bool has_warning(const LoadedBenchmark& b, const std::string& field) {
  return std::any_of(b.warnings.begin(), b.warnings.end(), [&](const LoaderWarning& w) { return w.field == field; });
}

std::string error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const DataError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST(Descriptors, PublishedStatistics) {
  const auto& table = benchmark_descriptors();
  ASSERT_EQ(table.size(), 5u);
  const auto swat = *find_descriptor("swat");
  EXPECT_EQ(swat.expected_train_len, 495000u);
  EXPECT_EQ(swat.expected_test_len, 449919u);
  EXPECT_DOUBLE_EQ(swat.expected_anomaly_ratio, 0.1233);
  EXPECT_EQ(swat.expected_feature_count, 51u);
  const auto wadi = *find_descriptor("WADI");
  EXPECT_EQ(wadi.expected_train_len, 784537u);
  EXPECT_EQ(wadi.expected_test_len, 172801u);
  EXPECT_DOUBLE_EQ(wadi.expected_anomaly_ratio, 0.0577);
  EXPECT_EQ(wadi.expected_feature_count, 123u);
  const auto msl = *find_descriptor("MSL");
  EXPECT_EQ(msl.expected_train_len, 58317u);
  EXPECT_EQ(msl.expected_test_len, 73729u);
  EXPECT_DOUBLE_EQ(msl.expected_anomaly_ratio, 0.105);
  EXPECT_EQ(msl.expected_feature_count, 55u);
  const auto smap = *find_descriptor("SMAP");
  EXPECT_EQ(smap.expected_train_len, 135183u);
  EXPECT_EQ(smap.expected_test_len, 427617u);
  EXPECT_DOUBLE_EQ(smap.expected_anomaly_ratio, 0.128);
  EXPECT_EQ(smap.expected_feature_count, 25u);
  const auto smd = *find_descriptor("SMD");
  EXPECT_EQ(smd.expected_train_len, 25300u);
  EXPECT_EQ(smd.expected_test_len, 25300u);
  EXPECT_DOUBLE_EQ(smd.expected_anomaly_ratio, 0.0421);
  EXPECT_EQ(smd.expected_feature_count, 38u);
  EXPECT_FALSE(find_descriptor("KDD").has_value());
}

TEST(Loaders, Swat) {
  const auto b = load_benchmark("SWaT", test::fixtures_dir() / "swat");
  EXPECT_EQ(b.train.length(), 40);
  EXPECT_EQ(b.test.length(), 30);
  EXPECT_EQ(b.train.feature_count(), 51);
  EXPECT_EQ(ones(b.test), 7u);
  EXPECT_EQ((*b.test.labels)[10], 1);  // the "A ttack" spelling
  EXPECT_EQ((*b.test.labels)[17], 0);
  EXPECT_TRUE(has_warning(b, "train_length"));
  EXPECT_FALSE(has_warning(b, "feature_count"));
  EXPECT_EQ(b.metadata.at("dataset"), "SWaT");
}

TEST(Loaders, WadiDropsEmptyColumns) {
  const auto b = load_benchmark("wadi", test::fixtures_dir() / "wadi");
  EXPECT_EQ(b.train.length(), 36);
  EXPECT_EQ(b.test.length(), 24);
  EXPECT_EQ(b.train.feature_count(), 123);
  EXPECT_EQ(b.test.feature_count(), 123);
  EXPECT_EQ(ones(b.test), 3u);
  EXPECT_FALSE(has_warning(b, "feature_count"));
  const auto meta = tk::read_json(test::fixtures_dir() / "fixtures.json");
  std::string expect;
  for (const auto& n : meta["wadi"]["dropped"]) expect += (expect.empty() ? "" : ";") + n.get<std::string>();
  EXPECT_EQ(b.metadata.at("dropped_empty_columns"), expect);
}

TEST(Loaders, MslConcatenatesChannelsInOrder) {
  const auto b = load_benchmark("MSL", test::fixtures_dir() / "msl");
  EXPECT_EQ(b.metadata.at("channel_order"), "C-1,M-1,T-4");
  EXPECT_EQ(b.train.length(), 30);
  EXPECT_EQ(b.test.length(), 45);
  EXPECT_EQ(b.train.feature_count(), 55);
  EXPECT_EQ(ones(b.test), 9u);
  const Labels& y = *b.test.labels;
  EXPECT_EQ(y[5], 1);
  EXPECT_EQ(y[14], 1);
  EXPECT_EQ(y[15], 0);
  // T-4 starts at test row 30.
  EXPECT_EQ(y[32], 1);
  EXPECT_EQ(y[34], 1);
  EXPECT_EQ(y[35], 0);
}

TEST(Loaders, SmapFiltersBySpacecraft) {
  const auto b = load_benchmark("SMAP", test::fixtures_dir() / "smap");
  EXPECT_EQ(b.metadata.at("channel_order"), "E-1,P-1");
  EXPECT_EQ(b.train.length(), 23);
  EXPECT_EQ(b.test.length(), 28);
  EXPECT_EQ(b.train.feature_count(), 25);
  EXPECT_EQ(ones(b.test), 6u);
  EXPECT_EQ((*b.test.labels)[12], 1);
}

TEST(Loaders, SmdMachineSelection) {
  const auto a = load_benchmark("SMD", test::fixtures_dir() / "smd");
  EXPECT_EQ(a.metadata.at("machine"), "machine-1-1");
  EXPECT_EQ(a.test.length(), 50);
  EXPECT_EQ(a.train.feature_count(), 38);
  EXPECT_EQ(ones(a.test), 4u);
  LoaderOptions opt;
  opt.smd_machine = "machine-1-2";
  const auto b = load_benchmark("smd", test::fixtures_dir() / "smd", opt);
  EXPECT_EQ(b.test.length(), 30);
  EXPECT_EQ(ones(b.test), 2u);
}

TEST(Loaders, MissingFilesListLayout) {
  test::TempDir dir("missing");
  const std::string msg = error_of([&] { load_benchmark("SWaT", dir.path()); });
  EXPECT_NE(msg.find("SWaT_Dataset_Normal_v1.csv"), std::string::npos) << msg;
  const std::string none = error_of([&] { load_benchmark("SMD", dir.path() / "nope"); });
  EXPECT_NE(none.find("test_label"), std::string::npos) << none;
  EXPECT_THROW(load_benchmark("KDD", dir.path()), ConfigError);
}

TEST(Loaders, MalformedRowReportsRowNumber) {
  test::TempDir dir("malformed");
  fs::copy(test::fixtures_dir() / "smd", dir.path(), fs::copy_options::recursive);
  const fs::path file = dir.path() / "train" / "machine-1-1.txt";
  std::vector<std::string> lines;
  {
    std::ifstream in(file);
    for (std::string l; std::getline(in, l);) lines.push_back(l);
  }
  lines[6] = "abc" + lines[6].substr(lines[6].find(','));
  {
    std::ofstream out(file);
    for (const auto& l : lines) out << l << '\n';
  }
  const std::string msg = error_of([&] { load_benchmark("SMD", dir.path()); });
  EXPECT_NE(msg.find("row 7"), std::string::npos) << msg;
  EXPECT_NE(msg.find("abc"), std::string::npos) << msg;
}

TEST(Validation, WarnsOnRatioMismatch) {
  TimeSeriesDataset train, test;
  train.values = Matrix::Zero(25300, 38);
  test.values = Matrix::Zero(25300, 38);
  test.labels = Labels(25300, 0);
  for (std::size_t t = 0; t < 1065; ++t) (*test.labels)[t] = 1;  // 4.21%
  EXPECT_TRUE(validate_against(*find_descriptor("SMD"), train, test).empty());
  for (std::size_t t = 1065; t < 2000; ++t) (*test.labels)[t] = 1;
  const auto w = validate_against(*find_descriptor("SMD"), train, test);
  ASSERT_EQ(w.size(), 1u);
  EXPECT_EQ(w[0].field, "anomaly_ratio");
}

TEST(Synth, EmptyPlanGivesNoLabels) {
  SynthConfig c;
  c.train_length = 300;
  c.test_length = 200;
  const SynthData d = synth_generate(c);
  EXPECT_EQ(d.train.length(), 300);
  EXPECT_EQ(d.test.length(), 200);
  EXPECT_EQ(d.train.feature_count(), 5);
  EXPECT_EQ(ones(d.test), 0u);
}

TEST(Synth, SinglePointAnomaly) {
  SynthConfig c;
  c.train_length = 300;
  c.test_length = 200;
  c.plan = {PlannedAnomaly{AnomalyType::point, 50, 1, 6.0, {2}}};
  SynthConfig clean = c;
  clean.plan.clear();
  const SynthData d = synth_generate(c);
  const SynthData base = synth_generate(clean);
  EXPECT_EQ(ones(d.test), 1u);
  EXPECT_EQ((*d.test.labels)[50], 1);
  // Only the planned cell moves.
  const Matrix diff = d.test.values - base.test.values;
  EXPECT_NE(diff(50, 2), 0.0);
  EXPECT_EQ(diff.cwiseAbs().sum(), std::abs(diff(50, 2)));
}

TEST(Synth, DeterministicForSeed) {
  SynthConfig c;
  c.train_length = 400;
  c.test_length = 300;
  c.seed = 9;
  c.plan = standard_anomaly_plan(c.test_length, c.features, c.seed);
  const SynthData a = synth_generate(c);
  const SynthData b = synth_generate(c);
  EXPECT_EQ(a.train.values, b.train.values);
  EXPECT_EQ(a.test.values, b.test.values);
  EXPECT_EQ(*a.test.labels, *b.test.labels);
  c.seed = 10;
  EXPECT_NE(synth_generate(c).train.values, a.train.values);
}

TEST(Synth, OverlappingPlanRejected) {
  SynthConfig c;
  c.test_length = 200;
  c.plan = {PlannedAnomaly{AnomalyType::point, 10, 5, 6.0, {}}, PlannedAnomaly{AnomalyType::point, 14, 3, 6.0, {}}};
  EXPECT_THROW(synth_generate(c), ConfigError);
  c.plan = {PlannedAnomaly{AnomalyType::point, 199, 2, 6.0, {}}};
  EXPECT_THROW(synth_generate(c), ConfigError);
}

TEST(Synth, StandardPlanHasTwoOfEachType) {
  const auto plan = standard_anomaly_plan(2000, 5, 1);
  ASSERT_EQ(plan.size(), 6u);
  int counts[3] = {0, 0, 0};
  for (const auto& a : plan) ++counts[static_cast<int>(a.type)];
  EXPECT_EQ(counts[0], 2);
  EXPECT_EQ(counts[1], 2);
  EXPECT_EQ(counts[2], 2);
  for (std::size_t i = 1; i < plan.size(); ++i) EXPECT_GE(plan[i].start, plan[i - 1].start + plan[i - 1].length);
  EXPECT_EQ(anomaly_type_from_string(to_string(AnomalyType::contextual)), AnomalyType::contextual);
  EXPECT_THROW(anomaly_type_from_string("spiky"), ConfigError);
}
