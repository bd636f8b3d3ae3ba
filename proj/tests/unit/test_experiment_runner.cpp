#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>

#include <nlohmann/json.hpp>

#include "latad/checkpoint.hpp"
#include "latad/config.hpp"
#include "latad/io.hpp"
#include "latad/plots.hpp"
#include "latad/runner.hpp"
#include "test_util.hpp"

using namespace latad;
namespace fs = std::filesystem;
using nlohmann::json;

// ---- config ----------------------------------------------------------------

TEST(Config, YamlRoundTripIsCanonical) {
  test::TempDir dir("cfg");
  const ExperimentConfig c = test::quick_config(dir.path());
  const std::string text = config_to_yaml(c);
  const ExperimentConfig back = config_from_yaml(text);
  EXPECT_EQ(config_to_yaml(back), text);
  EXPECT_EQ(config_hash(back), config_hash(c));
}

TEST(Config, UnknownKeyRejected) {
  EXPECT_THROW(config_from_yaml("train:\n  max_epochs: 3\n"), ConfigError);
  EXPECT_THROW(config_from_yaml("nonsense: 1\n"), ConfigError);
  EXPECT_NO_THROW(config_from_yaml("train:\n  max_epoch: 3\n"));
}

TEST(Config, OverridesSetDottedKeys) {
  ExperimentConfig c = default_config();
  apply_override(c, "train.max_epoch=7");
  apply_override(c, "scoring.threshold_policy", "quantile");
  apply_override(c, "model.use_gat=false");
  apply_override(c, "seed=42");
  EXPECT_EQ(c.train.max_epoch, 7);
  EXPECT_EQ(c.scoring.threshold_policy, ThresholdPolicy::quantile);
  EXPECT_FALSE(c.model.use_gat);
  EXPECT_EQ(c.train.seed, 42u);  // propagated by resolve_seeds
  EXPECT_THROW(apply_override(c, "train.bogus=1"), ConfigError);
  EXPECT_THROW(apply_override(c, "train.max_epoch=many"), ConfigError);
  EXPECT_THROW(apply_override(c, "no_equals_sign"), ConfigError);
}

TEST(Config, HashIgnoresOutputDirectory) {
  ExperimentConfig a = default_config();
  ExperimentConfig b = a;
  b.output_dir = "/somewhere/else";
  EXPECT_EQ(config_hash(a), config_hash(b));
  b.train.max_epoch += 1;
  EXPECT_NE(config_hash(a), config_hash(b));
  EXPECT_EQ(config_hash(a).size(), 64u);
}

TEST(Config, ValidationRejectsInconsistentValues) {
  ExperimentConfig c = default_config();
  c.model.transformer_heads = 3;
  c.model.d_model = 128;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Config, ShippedAcceptanceConfigLoads) {
  const ExperimentConfig c = load_config(LATAD_SOURCE_DIR "/configs/synthetic_desk.yaml");
  EXPECT_EQ(c.dataset.kind, "synthetic");
  EXPECT_NO_THROW(c.validate());
}

// ---- io and checkpoints ----------------------------------------------------

TEST(Io, NpyRoundTrip) {
  test::TempDir dir("npy");
  std::mt19937_64 rng(1);
  const Matrix m = test::random_matrix(7, 3, rng);
  io::write_npy(dir.path() / "m.npy", m);
  EXPECT_EQ(io::read_npy(dir.path() / "m.npy"), m);
}

TEST(Io, ReadsFixtureNpy) {
  const Matrix m = io::read_npy(test::fixtures_dir() / "msl" / "train" / "C-1.npy");
  EXPECT_EQ(m.rows(), 10);
  EXPECT_EQ(m.cols(), 55);
}

TEST(Io, CsvDatasetRoundTrip) {
  test::TempDir dir("csv");
  TimeSeriesDataset d;
  d.values = Matrix(3, 2);
  d.values << 1.5, -2, 0.25, 1e-9, 3, 4;
  d.timestamps = {10, 11, 12};
  d.feature_names = {"a", "b"};
  d.labels = Labels{0, 1, 0};
  io::write_csv_dataset(dir.path() / "d.csv", d);
  const TimeSeriesDataset back = io::read_csv_dataset(dir.path() / "d.csv", SplitRole::test);
  EXPECT_EQ(back.values, d.values);
  EXPECT_EQ(back.timestamps, d.timestamps);
  EXPECT_EQ(back.feature_names, d.feature_names);
  EXPECT_EQ(*back.labels, *d.labels);
}

TEST(Io, CsvSplittingAndNumbers) {
  EXPECT_EQ(io::split_csv_line(" a, \"b,c\" ,d"), (std::vector<std::string>{"a", "b,c", "d"}));
  EXPECT_DOUBLE_EQ(io::parse_number("2.5"), 2.5);
  EXPECT_TRUE(std::isnan(io::parse_number("x")));
  EXPECT_TRUE(std::isnan(io::parse_number("")));
}

TEST(Io, Sha256KnownAnswer) {
  EXPECT_EQ(io::sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(io::sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST(Checkpoint, RoundTripIsBitExact) {
  TrainConfig tc;
  tc.seed = 5;
  Checkpoint c;
  c.config_text = "seed: 5\n";
  c.config_hash = io::sha256_hex(c.config_text);
  c.model = LatadModel::create(test::tiny_extractor(), test::tiny_generators(), tc);
  ReferenceModel ref;
  std::mt19937_64 rng(2);
  ref.centers = test::random_matrix(3, 4, rng);
  c.reference = ref;
  c.stats = NormalizationStats{RowVector::Constant(2, -1.0), RowVector::Constant(2, 2.0)};
  c.metadata["disabled_modules"] = "gat";
  const Checkpoint back = deserialize_checkpoint(serialize_checkpoint(c));
  EXPECT_TRUE(back.model.params == c.model.params);
  EXPECT_EQ(back.model.margins, c.model.margins);
  EXPECT_EQ(back.reference->centers, ref.centers);
  EXPECT_EQ(back.stats->train_max, c.stats->train_max);
  EXPECT_EQ(back.metadata, c.metadata);
  EXPECT_EQ(back.config_hash, c.config_hash);
  EXPECT_EQ(back.model.extractor_config.d_model, 4);
  EXPECT_EQ(serialize_checkpoint(back), serialize_checkpoint(c));
}

TEST(Checkpoint, CorruptBytesRejected) {
  EXPECT_THROW(deserialize_checkpoint("not a checkpoint"), DataError);
}

TEST(Plots, PearsonOfIdenticalFeaturesIsOne) {
  std::mt19937_64 rng(3);
  Matrix x = test::random_matrix(100, 3, rng);
  x.col(2) = x.col(0);
  const Matrix c = plots::pearson_correlation(x);
  EXPECT_NEAR(c(0, 2), 1.0, 1e-12);
  EXPECT_NEAR(c(2, 0), 1.0, 1e-12);
  EXPECT_NEAR(c(1, 1), 1.0, 1e-12);
  EXPECT_NE(plots::heatmap_svg(c, {"a", "b", "c"}).find("<svg"), std::string::npos);
}

// ---- commands ----------------------------------------------------------------

TEST(Runner, PreprocessArtifactRoundTrips) {
  test::TempDir dir("pre");
  const ExperimentConfig c = test::quick_config(dir.path());
  const runner::PreparedData p = runner::cmd_preprocess(c);
  const runner::PreparedData back = runner::load_prepared(dir.path());
  EXPECT_EQ(back.data.train.values, p.data.train.values);
  EXPECT_EQ(back.data.validation.values, p.data.validation.values);
  EXPECT_EQ(back.data.test.values, p.data.test.values);
  EXPECT_EQ(*back.data.test.labels, *p.data.test.labels);
  EXPECT_EQ(back.data.test.timestamps, p.data.test.timestamps);
  EXPECT_EQ(back.data.stats.train_min, p.data.stats.train_min);
  // 600 raw rows at factor 2, minus the validation tail.
  EXPECT_EQ(p.data.train.length() + p.data.validation.length(), 300);
}

TEST(Runner, RerunKeepsConfigHash) {
  test::TempDir dir("rerun");
  const ExperimentConfig c = test::quick_config(dir.path());
  runner::cmd_preprocess(c);
  const json first = json::parse(io::read_text_file(dir.path() / "manifest.json"));
  runner::cmd_preprocess(c);
  const json second = json::parse(io::read_text_file(dir.path() / "manifest.json"));
  EXPECT_EQ(first["config_hash"], second["config_hash"]);
  EXPECT_EQ(first["config_hash"].get<std::string>(), config_hash(c));
  EXPECT_EQ(first["commands"]["preprocess"]["artifacts"], second["commands"]["preprocess"]["artifacts"]);
}

TEST(Runner, MissingDatasetPathNamesIt) {
  test::TempDir dir("missing");
  ExperimentConfig c = test::quick_config(dir.path());
  c.dataset.kind = "benchmark";
  c.dataset.name = "SMD";
  c.dataset.path = (dir.path() / "no_such_dataset").string();
  try {
    runner::cmd_preprocess(c);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("no_such_dataset"), std::string::npos);
    EXPECT_EQ(runner::exit_code_for(e), runner::ExitCode::data_error);
  }
  const json m = json::parse(io::read_text_file(dir.path() / "manifest.json"));
  EXPECT_EQ(m["commands"]["preprocess"]["status"], "failed");
}

TEST(Runner, DataRootResolution) {
  ExperimentConfig c = default_config();
  EXPECT_EQ(runner::resolve_data_path(c, "/abs/x"), fs::path("/abs/x"));
  c.data_root = "/data";
  EXPECT_EQ(runner::resolve_data_path(c, "smd"), fs::path("/data/smd"));
  c.data_root.clear();
  ::setenv(runner::kDataRootEnv, "/env_root", 1);
  EXPECT_EQ(runner::resolve_data_path(c, "smd"), fs::path("/env_root/smd"));
  ::unsetenv(runner::kDataRootEnv);
  EXPECT_EQ(runner::resolve_data_path(c, "smd"), fs::path("smd"));
}

TEST(Runner, ZeroEpochsWritesInitialCheckpointAndEmptyHistory) {
  test::TempDir dir("zero");
  ExperimentConfig c = test::quick_config(dir.path());
  c.train.max_epoch = 0;
  const runner::TrainResult r = runner::cmd_train(c);
  EXPECT_TRUE(r.history.epochs.empty());
  EXPECT_EQ(io::read_text_file(dir.path() / "history.csv"), "epoch,L_comp,L_sep,L_reg,total\n");
  const Checkpoint back = load_checkpoint(dir.path() / "model.ckpt");
  EXPECT_EQ(back.metadata.at("epochs_completed"), "0");
  EXPECT_TRUE(back.model.params == r.checkpoint.model.params);
  // Initial weights depend only on the seeds.
  const auto shaped = back.model.extractor_config;
  TrainConfig tc = c.train;
  EXPECT_TRUE(LatadModel::create(shaped, back.model.generator_config, tc).params == back.model.params);
}

TEST(Runner, AblationRecordedInCheckpoint) {
  test::TempDir dir("ablate");
  ExperimentConfig c = test::quick_config(dir.path());
  c.model.use_gat = false;
  c.train.max_epoch = 1;
  runner::cmd_train(c);
  const Checkpoint back = load_checkpoint(dir.path() / "model.ckpt");
  EXPECT_EQ(back.metadata.at("disabled_modules"), "gat");
  EXPECT_FALSE(back.model.extractor_config.use_gat);
  EXPECT_FALSE(back.model.params.contains("extractor/gat/attention"));
}

TEST(Runner, PipelineReportsThreeMetricsAndReproduces) {
  test::TempDir a("pipe_a");
  test::TempDir b("pipe_b");
  const runner::PipelineResult ra = runner::run_pipeline(test::quick_config(a.path()));
  const runner::PipelineResult rb = runner::run_pipeline(test::quick_config(b.path()));
  ASSERT_TRUE(ra.evaluate.report.has_value());
  const json report = json::parse(io::read_text_file(a.path() / "report.json"));
  ASSERT_EQ(report["metrics"].size(), 3u);
  EXPECT_EQ(report["metrics"][0]["name"], "F1");
  EXPECT_EQ(report["metrics"][1]["name"], "F1_PA50");
  EXPECT_EQ(report["metrics"][2]["name"], "F1_PA");
  EXPECT_TRUE(fs::exists(a.path() / "plots" / "score_trace.svg"));
  EXPECT_TRUE(fs::exists(a.path() / "plots" / "correlation.svg"));

  EXPECT_EQ(io::sha256_file(a.path() / "history.csv"), io::sha256_file(b.path() / "history.csv"));
  EXPECT_EQ(io::sha256_file(a.path() / "scores.csv"), io::sha256_file(b.path() / "scores.csv"));
  EXPECT_EQ(runner::content_hash_of_manifest(io::read_text_file(a.path() / "manifest.json")),
            runner::content_hash_of_manifest(io::read_text_file(b.path() / "manifest.json")));

  const runner::ScoreFile s = runner::read_scores_csv(a.path() / "scores.csv");
  EXPECT_EQ(s.scores.size(), ra.score.test.scores.size());
  EXPECT_EQ(s.scores, ra.score.test.scores);
}

TEST(Runner, DiagnoseHighestScoreWindow) {
  test::TempDir dir("diag");
  ExperimentConfig c = test::quick_config(dir.path());
  c.diagnosis.top_k = 2;
  runner::run_pipeline(c);
  const runner::DiagnoseResult r = runner::cmd_diagnose(c, "highest-score");
  const auto& ws = runner::cmd_score(c).test_window_scores;
  const auto best = std::max_element(ws.begin(), ws.end()) - ws.begin();
  EXPECT_EQ(r.window_start, best * c.preprocess.score_stride);
  EXPECT_EQ(r.report.ranking.size(), 2u);
  std::size_t total = 0;
  for (auto n : r.report.counts) total += n;
  EXPECT_EQ(total, static_cast<std::size_t>(c.preprocess.window));
  EXPECT_TRUE(json::parse(r.report_json).contains("ranking"));
  EXPECT_THROW(runner::cmd_diagnose(c, "1e12"), DataError);
  EXPECT_THROW(runner::cmd_diagnose(c, "soon"), ConfigError);
}

// ---- command-line tool -------------------------------------------------------

#ifdef LATAD_CLI_PATH
namespace {

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string("\"") + LATAD_CLI_PATH + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Cli, ExitCodes) {
  test::TempDir dir("cli");
  const fs::path log = dir.path() / "log.txt";
  EXPECT_EQ(run_cli("print-config --set train.max_epoch=3", log), 0);
  EXPECT_NE(io::read_text_file(log).find("max_epoch: 3"), std::string::npos);
  EXPECT_EQ(run_cli("print-config --set train.unknown=3", log), 2);
  const fs::path missing = dir.path() / "absent_dir";
  EXPECT_EQ(run_cli("preprocess --dataset SMD --data-path \"" + missing.string() + "\" -o \"" +
                        (dir.path() / "run").string() + "\"",
                    log),
            3);
  EXPECT_NE(io::read_text_file(log).find("absent_dir"), std::string::npos);
  EXPECT_NE(run_cli("no-such-command", log), 0);
}

TEST(Cli, DataRootFromEnvironment) {
  test::TempDir dir("cli_env");
  const fs::path log = dir.path() / "log.txt";
  const std::string env = "LATAD_DATA_ROOT=\"" + test::fixtures_dir().string() + "\" ";
  const std::string cmd = env + "\"" + LATAD_CLI_PATH + "\" preprocess --dataset SMD --data-path smd -o \"" +
                          (dir.path() / "run").string() + "\" > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  ASSERT_TRUE(WIFEXITED(status));
  EXPECT_EQ(WEXITSTATUS(status), 0) << io::read_text_file(log);
  EXPECT_TRUE(fs::exists(dir.path() / "run" / "preprocessed" / "meta.json"));
}
#endif
