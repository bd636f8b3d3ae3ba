#include "latad/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "latad/io.hpp"
#include "latad/plots.hpp"
#include "latad/scoring.hpp"

#ifndef LATAD_VERSION
#define LATAD_VERSION "0.0.0"
#endif

namespace latad::runner {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

fs::path run_dir(const ExperimentConfig& config) {
  fs::path dir(config.output_dir);
  fs::create_directories(dir);
  return dir;
}

fs::path prepared_dir(const fs::path& dir) { return dir / "preprocessed"; }

Matrix column(const std::vector<double>& v) {
  Matrix m(static_cast<Eigen::Index>(v.size()), 1);
  for (std::size_t i = 0; i < v.size(); ++i) m(static_cast<Eigen::Index>(i), 0) = v[i];
  return m;
}

Matrix column(const Labels& v) {
  Matrix m(static_cast<Eigen::Index>(v.size()), 1);
  for (std::size_t i = 0; i < v.size(); ++i) m(static_cast<Eigen::Index>(i), 0) = v[i];
  return m;
}

std::vector<double> to_vector(const Matrix& m) {
  return std::vector<double>(m.data(), m.data() + m.size());
}

Labels to_labels(const Matrix& m) {
  Labels y;
  for (Eigen::Index i = 0; i < m.size(); ++i) y.push_back(static_cast<std::uint8_t>(m(i) != 0.0));
  return y;
}

json row_json(const RowVector& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

RowVector row_from_json(const json& j) {
  const auto v = j.get<std::vector<double>>();
  RowVector r(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) r(static_cast<Eigen::Index>(i)) = v[i];
  return r;
}

// The snapshot leaves output_dir out so identical experiments hash identically.
void write_config_snapshot(const fs::path& dir, const ExperimentConfig& config) {
  io::write_text_file_atomic(dir / "config.yaml", canonical_config_text(config));
}

ExperimentConfig shaped_config(ExperimentConfig config, Eigen::Index features) {
  config.model.features = static_cast<int>(features);
  config.generators.features = static_cast<int>(features);
  config.model.window = config.preprocess.window;
  config.generators.window = config.preprocess.window;
  return config;
}

std::string disabled_modules(const ExtractorConfig& c) {
  std::vector<std::string> off;
  if (!c.use_gat) off.emplace_back("gat");
  if (!c.use_transformer) off.emplace_back("transformer");
  if (!c.use_tcn) off.emplace_back("tcn");
  return off.empty() ? "none" : fmt::format("{}", fmt::join(off, ","));
}

std::string fmt_double(double v) { return fmt::format("{:.17g}", v); }

std::vector<double> read_validation_scores(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(fmt::format("cannot open {}", path.string()));
  std::string line;
  std::getline(in, line);
  std::vector<double> out;
  while (std::getline(in, line)) {
    const auto cells = io::split_csv_line(line);
    if (cells.size() == 2) out.push_back(io::parse_number(cells[1]));
  }
  return out;
}

std::vector<double> read_window_scores(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(fmt::format("cannot open {}", path.string()));
  std::string line;
  std::getline(in, line);
  std::vector<double> out;
  while (std::getline(in, line)) {
    const auto cells = io::split_csv_line(line);
    if (cells.size() == 3) out.push_back(io::parse_number(cells[2]));
  }
  return out;
}

Labels window_labels(const Labels& y, int w, int stride) {
  Labels out;
  const std::size_t count = prep::window_count(static_cast<Eigen::Index>(y.size()), w, stride);
  for (std::size_t i = 0; i < count; ++i) {
    const auto start = i * static_cast<std::size_t>(stride);
    const bool any = std::any_of(y.begin() + static_cast<std::ptrdiff_t>(start),
                                 y.begin() + static_cast<std::ptrdiff_t>(start) + w, [](std::uint8_t v) { return v; });
    out.push_back(any ? 1 : 0);
  }
  return out;
}

Checkpoint require_checkpoint(const fs::path& dir) {
  const fs::path path = dir / "model.ckpt";
  if (!fs::exists(path)) throw DataError(fmt::format("no checkpoint at {}; run 'train' first", path.string()));
  Checkpoint ckpt = load_checkpoint(path);
  if (!ckpt.reference) throw DataError(fmt::format("{} has no reference model", path.string()));
  return ckpt;
}

}  // namespace

std::string toolkit_version() { return LATAD_VERSION; }

ExitCode exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return ExitCode::config_error;
  if (dynamic_cast<const DivergenceError*>(&e)) return ExitCode::training_failed;
  if (dynamic_cast<const DataError*>(&e) || dynamic_cast<const ShapeError*>(&e)) return ExitCode::data_error;
  if (dynamic_cast<const fs::filesystem_error*>(&e)) return ExitCode::data_error;
  return ExitCode::internal_error;
}

fs::path resolve_data_path(const ExperimentConfig& config, const std::string& path) {
  const fs::path p(path);
  if (p.is_absolute()) return p;
  if (!config.data_root.empty()) return fs::path(config.data_root) / p;
  if (const char* env = std::getenv(kDataRootEnv); env && *env) return fs::path(env) / p;
  return p;
}

SynthConfig resolved_synth_config(const ExperimentConfig& config) {
  SynthConfig s = config.dataset.synth;
  s.seed = config.seed;
  if (config.dataset.standard_plan) s.plan = standard_anomaly_plan(s.test_length, s.features, config.seed);
  return s;
}

RawData load_dataset(const ExperimentConfig& config) {
  RawData raw;
  const std::string& kind = config.dataset.kind;
  if (kind == "synthetic") {
    const SynthConfig s = resolved_synth_config(config);
    SynthData d = synth_generate(s);
    raw.train = std::move(d.train);
    raw.test = std::move(d.test);
    raw.metadata["dataset"] = "synthetic";
    raw.metadata["anomalies"] = std::to_string(s.plan.size());
  } else if (kind == "benchmark") {
    LoaderOptions opts;
    opts.smd_machine = config.dataset.smd_machine;
    LoadedBenchmark b = load_benchmark(config.dataset.name, resolve_data_path(config, config.dataset.path), opts);
    raw.train = std::move(b.train);
    raw.test = std::move(b.test);
    raw.metadata = std::move(b.metadata);
    raw.warnings = std::move(b.warnings);
  } else {
    const fs::path tr = resolve_data_path(config, config.dataset.train_csv);
    const fs::path te = resolve_data_path(config, config.dataset.test_csv);
    for (const auto& p : {tr, te}) {
      if (!fs::is_regular_file(p)) throw DataError(fmt::format("dataset file {} does not exist", p.string()));
    }
    raw.train = io::read_csv_dataset(tr, SplitRole::train);
    raw.test = io::read_csv_dataset(te, SplitRole::test);
    raw.metadata["dataset"] = tr.stem().string();
    if (raw.train.feature_count() != raw.test.feature_count()) {
      throw DataError("train and test CSV files have different feature counts");
    }
  }
  return raw;
}

void save_prepared(const fs::path& dir, const PreparedData& prepared) {
  const fs::path out = prepared_dir(dir);
  fs::create_directories(out);
  const PreprocessedData& d = prepared.data;
  json meta;
  meta["feature_names"] = d.train.feature_names;
  meta["train_min"] = row_json(d.stats.train_min);
  meta["train_max"] = row_json(d.stats.train_max);
  meta["metadata"] = prepared.metadata;
  for (const TimeSeriesDataset* s : {&d.train, &d.validation, &d.test}) {
    const std::string name = to_string(s->role);
    io::write_npy(out / (name + "_values.npy"), s->values);
    io::write_npy(out / (name + "_timestamps.npy"), column(s->timestamps));
    if (s->labels) io::write_npy(out / (name + "_labels.npy"), column(*s->labels));
    meta["has_labels"][name] = s->labels.has_value();
  }
  io::write_text_file_atomic(out / "meta.json", meta.dump(2) + "\n");
}

bool has_prepared(const fs::path& dir) { return fs::exists(prepared_dir(dir) / "meta.json"); }

PreparedData load_prepared(const fs::path& dir) {
  const fs::path in = prepared_dir(dir);
  if (!has_prepared(dir)) throw DataError(fmt::format("no preprocessed data in {}; run 'preprocess' first", in.string()));
  const json meta = json::parse(io::read_text_file(in / "meta.json"));
  PreparedData p;
  p.metadata = meta.at("metadata").get<std::map<std::string, std::string>>();
  p.data.stats.train_min = row_from_json(meta.at("train_min"));
  p.data.stats.train_max = row_from_json(meta.at("train_max"));
  const auto names = meta.at("feature_names").get<std::vector<std::string>>();
  for (auto [s, role] : {std::pair{&p.data.train, SplitRole::train}, std::pair{&p.data.validation, SplitRole::validation},
                         std::pair{&p.data.test, SplitRole::test}}) {
    const std::string name = to_string(role);
    s->role = role;
    s->feature_names = names;
    s->values = io::read_npy(in / (name + "_values.npy"));
    s->timestamps = to_vector(io::read_npy(in / (name + "_timestamps.npy")));
    if (meta.at("has_labels").at(name).get<bool>()) s->labels = to_labels(io::read_npy(in / (name + "_labels.npy")));
    s->validate();
  }
  return p;
}

void write_scores_csv(const fs::path& path, const ScoreFile& s) {
  std::string out = s.labels ? "timestamp,score,prediction,label\n" : "timestamp,score,prediction\n";
  for (std::size_t i = 0; i < s.scores.size(); ++i) {
    out += fmt::format("{},{},{}", fmt_double(s.timestamps[i]), fmt_double(s.scores[i]), int(s.predictions[i]));
    if (s.labels) out += fmt::format(",{}", int((*s.labels)[i]));
    out += '\n';
  }
  io::write_text_file_atomic(path, out);
}

ScoreFile read_scores_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(fmt::format("cannot open {}", path.string()));
  std::string line;
  std::getline(in, line);
  const auto header = io::split_csv_line(line);
  if (header.size() < 3 || header[0] != "timestamp" || header[1] != "score" || header[2] != "prediction") {
    throw DataError(fmt::format("{}: unexpected header", path.string()));
  }
  ScoreFile s;
  const bool labelled = header.size() == 4;
  if (labelled) s.labels = Labels{};
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    const auto cells = io::split_csv_line(line);
    if (cells.size() != header.size()) throw DataError(fmt::format("{}: malformed row {}", path.string(), row));
    s.timestamps.push_back(io::parse_number(cells[0]));
    s.scores.push_back(io::parse_number(cells[1]));
    s.predictions.push_back(cells[2] == "1" ? 1 : 0);
    if (labelled) s.labels->push_back(cells[3] == "1" ? 1 : 0);
  }
  return s;
}

std::string history_csv(const TrainHistory& history) {
  std::string out = "epoch,L_comp,L_sep,L_reg,total\n";
  for (const auto& e : history.epochs) {
    out += fmt::format("{},{},{},{},{}\n", e.epoch, fmt_double(e.mean.comp), fmt_double(e.mean.sep),
                       fmt_double(e.mean.reg), fmt_double(e.mean.total));
  }
  return out;
}

// Manifest

Manifest::Manifest(fs::path dir, const ExperimentConfig& config) : dir_(std::move(dir)) {
  const std::string hash = config_hash(config);
  const fs::path path = dir_ / "manifest.json";
  if (fs::exists(path)) {
    try {
      json existing = json::parse(io::read_text_file(path));
      if (existing.value("config_hash", "") == hash) {
        state_ = existing.dump();
        return;
      }
      spdlog::warn("{} belongs to a different configuration; starting a new manifest", path.string());
    } catch (const json::exception&) {
      spdlog::warn("{} is unreadable; starting a new manifest", path.string());
    }
  }
  json m;
  m["toolkit_version"] = toolkit_version();
  m["config_hash"] = hash;
  m["commands"] = json::object();
  m["timings"] = json::object();
  state_ = m.dump();
}

void Manifest::begin(const std::string& command) {
  json m = json::parse(state_);
  m["commands"][command] = {{"status", "running"}, {"artifacts", json::object()}, {"metadata", json::object()}};
  state_ = m.dump();
}

void Manifest::add_artifact(const std::string& command, const std::string& name, const fs::path& file) {
  json m = json::parse(state_);
  m["commands"][command]["artifacts"][name] = {{"path", fs::relative(file, dir_).generic_string()},
                                               {"sha256", io::sha256_file(file)}};
  state_ = m.dump();
}

void Manifest::set_metadata(const std::string& command, const std::string& key, const std::string& value) {
  json m = json::parse(state_);
  m["commands"][command]["metadata"][key] = value;
  state_ = m.dump();
}

void Manifest::finish(const std::string& command, double seconds) {
  json m = json::parse(state_);
  m["commands"][command]["status"] = "succeeded";
  m["commands"][command].erase("error");
  m["timings"][command] = seconds;
  state_ = m.dump();
  write();
}

void Manifest::fail(const std::string& command, const std::string& error, double seconds) {
  json m = json::parse(state_);
  m["commands"][command]["status"] = "failed";
  m["commands"][command]["error"] = error;
  m["timings"][command] = seconds;
  state_ = m.dump();
  write();
}

void Manifest::write() const { io::write_text_file_atomic(dir_ / "manifest.json", text() + "\n"); }

std::string Manifest::text() const { return nlohmann::json::parse(state_).dump(2); }

std::string Manifest::content_hash() const { return content_hash_of_manifest(state_); }

std::string content_hash_of_manifest(const std::string& manifest_json) {
  nlohmann::json m = nlohmann::json::parse(manifest_json);
  m.erase("timings");
  return io::sha256_hex(m.dump());
}

// Commands

namespace {

// Runs `body` under the manifest, recording failure before rethrowing.
template <typename F>
auto guarded(Manifest& manifest, const std::string& command, F&& body) {
  Stopwatch clock;
  manifest.begin(command);
  try {
    auto result = body();
    manifest.finish(command, clock.seconds());
    return result;
  } catch (const std::exception& e) {
    manifest.fail(command, e.what(), clock.seconds());
    throw;
  }
}

}  // namespace

SynthData cmd_synth(const ExperimentConfig& config) {
  if (config.dataset.kind != "synthetic") throw ConfigError("synth requires dataset.kind = synthetic");
  const fs::path dir = run_dir(config);
  Manifest manifest(dir, config);
  return guarded(manifest, "synth", [&] {
    const SynthConfig s = resolved_synth_config(config);
    SynthData d = synth_generate(s);
    const fs::path out = dir / "synth";
    fs::create_directories(out);
    io::write_csv_dataset(out / "train.csv", d.train);
    io::write_csv_dataset(out / "test.csv", d.test);
    json plan = json::array();
    for (const auto& a : s.plan) {
      plan.push_back({{"type", to_string(a.type)}, {"start", a.start}, {"length", a.length},
                      {"magnitude", a.magnitude}, {"features", a.features}});
    }
    io::write_text_file_atomic(out / "plan.json", plan.dump(2) + "\n");
    write_config_snapshot(dir, config);
    manifest.add_artifact("synth", "train_csv", out / "train.csv");
    manifest.add_artifact("synth", "test_csv", out / "test.csv");
    manifest.add_artifact("synth", "plan", out / "plan.json");
    manifest.add_artifact("synth", "config", dir / "config.yaml");
    return d;
  });
}

PreparedData cmd_preprocess(const ExperimentConfig& config) {
  const fs::path dir = run_dir(config);
  Manifest manifest(dir, config);
  return guarded(manifest, "preprocess", [&] {
    RawData raw = load_dataset(config);
    PreparedData p;
    p.data = preprocess(raw.train, raw.test, config.preprocess);
    p.metadata = raw.metadata;
    if (p.data.test.labels && !p.data.test.labels->empty()) {
      const auto& y = *p.data.test.labels;
      p.metadata["test_anomaly_ratio"] =
          fmt_double(static_cast<double>(std::count(y.begin(), y.end(), 1)) / static_cast<double>(y.size()));
    }
    save_prepared(dir, p);
    write_config_snapshot(dir, config);
    json warnings = json::array();
    for (const auto& w : raw.warnings) {
      warnings.push_back({{"dataset", w.dataset}, {"field", w.field}, {"expected", w.expected},
                          {"actual", std::isfinite(w.actual) ? json(w.actual) : json(nullptr)},
                          {"message", w.message()}});
    }
    io::write_text_file_atomic(dir / "preprocessed" / "loader_warnings.json", warnings.dump(2) + "\n");
    const fs::path pd = prepared_dir(dir);
    for (const auto& entry : std::vector<std::string>{"meta.json", "loader_warnings.json"}) {
      manifest.add_artifact("preprocess", entry, pd / entry);
    }
    for (const auto& file : fs::directory_iterator(pd)) {
      if (file.path().extension() == ".npy") manifest.add_artifact("preprocess", file.path().filename().string(), file.path());
    }
    manifest.add_artifact("preprocess", "config", dir / "config.yaml");
    manifest.set_metadata("preprocess", "loader_warnings", std::to_string(raw.warnings.size()));
    return p;
  });
}

TrainResult cmd_train(const ExperimentConfig& base) {
  const fs::path dir = run_dir(base);
  const PreparedData prepared = has_prepared(dir) ? load_prepared(dir) : cmd_preprocess(base);
  const ExperimentConfig config = shaped_config(base, prepared.data.train.feature_count());
  Manifest manifest(dir, base);
  return guarded(manifest, "train", [&] {
    TrainResult result;
    result.checkpoint.config_text = canonical_config_text(base);
    result.checkpoint.config_hash = config_hash(base);
    result.checkpoint.model = LatadModel::create(config.model, config.generators, config.train);
    LatadModel& model = result.checkpoint.model;

    std::string diversity = "epoch,mask_diversity\n";
    const auto on_epoch = [&](const EpochRecord& r) {
      result.history.epochs.push_back(r);
      diversity += fmt::format("{},{}\n", r.epoch, fmt_double(r.mask_diversity));
      spdlog::info("epoch {:>3}  total {:.6f}  comp {:.6f}  sep {:.6f}  reg {:.6f}", r.epoch, r.mean.total,
                   r.mean.comp, r.mean.sep, r.mean.reg);
    };
    const auto write_history = [&] {
      io::write_text_file_atomic(dir / "history.csv", history_csv(result.history));
      io::write_text_file_atomic(dir / "mask_diversity.csv", diversity);
      manifest.add_artifact("train", "history", dir / "history.csv");
      manifest.add_artifact("train", "mask_diversity", dir / "mask_diversity.csv");
    };
    try {
      fit(prepared.data.train.values, model, config.train, on_epoch);
    } catch (const DivergenceError&) {
      write_history();
      manifest.set_metadata("train", "epochs_completed", std::to_string(result.history.epochs.size()));
      throw;
    }

    const FeatureExtractor fx = model.extractor();
    const auto windows = prep::make_windows(prepared.data.train.values, config.preprocess.window, 1);
    const auto features = extract_features(fx, model.params, windows);
    ReferenceOptions ref_opts;
    ref_opts.k = config.scoring.k;
    ref_opts.coreset_fraction = config.scoring.coreset_fraction;
    ref_opts.max_iterations = config.scoring.max_iterations;
    ref_opts.seed = config.seed;
    KMeansTrace trace;
    result.checkpoint.reference = fit_reference(features, ref_opts, &trace);
    result.checkpoint.stats = prepared.data.stats;
    result.checkpoint.metadata["disabled_modules"] = disabled_modules(config.model);
    result.checkpoint.metadata["epochs_completed"] = std::to_string(result.history.epochs.size());
    result.checkpoint.metadata["reference_k"] = std::to_string(result.checkpoint.reference->k());
    result.checkpoint.metadata["toolkit_version"] = toolkit_version();

    save_checkpoint(dir / "model.ckpt", result.checkpoint);
    write_config_snapshot(dir, base);
    write_history();
    manifest.add_artifact("train", "checkpoint", dir / "model.ckpt");
    manifest.add_artifact("train", "config", dir / "config.yaml");
    manifest.set_metadata("train", "disabled_modules", disabled_modules(config.model));
    manifest.set_metadata("train", "epochs_completed", std::to_string(result.history.epochs.size()));
    return result;
  });
}

ScoreResult cmd_score(const ExperimentConfig& config) {
  const fs::path dir = run_dir(config);
  Manifest manifest(dir, config);
  return guarded(manifest, "score", [&] {
    const Checkpoint ckpt = require_checkpoint(dir);
    const PreparedData prepared = load_prepared(dir);
    const FeatureExtractor fx = ckpt.model.extractor();
    const ReferenceModel& ref = *ckpt.reference;
    const int w = fx.config().window;
    const int stride = config.preprocess.score_stride;
    const bool divide = config.scoring.divide_by_norm;
    const auto& val = prepared.data.validation;
    const auto& test = prepared.data.test;
    if (val.length() < w) throw DataError("validation split is shorter than one window");

    ScoreResult r;
    r.validation_scores = score_series(val.values, fx, ckpt.model.params, ref, divide, stride);
    r.test_window_scores = window_scores(test.values, fx, ckpt.model.params, ref, divide, stride);
    r.test.scores = align_window_scores(r.test_window_scores, w, static_cast<std::size_t>(test.length()), stride);
    r.test.timestamps = test.timestamps;
    r.test.labels = test.labels;
    if (test.labels && config.scoring.threshold_policy == ThresholdPolicy::best_f1) {
      const ThresholdResult t = search_threshold(r.test.scores, *test.labels, r.validation_scores, F1Metric::f1());
      r.threshold = t.threshold;
      r.threshold_protocol = t.fallback ? "best-f1-fallback-validation-mean" : "best-f1";
    } else {
      r.threshold = quantile_threshold(r.validation_scores, config.scoring.quantile);
      r.threshold_protocol = fmt::format("validation-quantile-{}", config.scoring.quantile);
    }
    r.test.predictions = predict_labels(r.test.scores, r.threshold);

    write_scores_csv(dir / "scores.csv", r.test);
    std::string vs = "timestamp,score\n";
    for (std::size_t i = 0; i < r.validation_scores.size(); ++i) {
      vs += fmt::format("{},{}\n", fmt_double(val.timestamps[i]), fmt_double(r.validation_scores[i]));
    }
    io::write_text_file_atomic(dir / "validation_scores.csv", vs);
    std::string ws = "window_start,end_timestamp,score\n";
    for (std::size_t i = 0; i < r.test_window_scores.size(); ++i) {
      const std::size_t start = i * static_cast<std::size_t>(stride);
      ws += fmt::format("{},{},{}\n", start, fmt_double(test.timestamps[start + static_cast<std::size_t>(w) - 1]),
                        fmt_double(r.test_window_scores[i]));
    }
    io::write_text_file_atomic(dir / "window_scores.csv", ws);
    manifest.add_artifact("score", "scores", dir / "scores.csv");
    manifest.add_artifact("score", "validation_scores", dir / "validation_scores.csv");
    manifest.add_artifact("score", "window_scores", dir / "window_scores.csv");
    manifest.set_metadata("score", "threshold", fmt_double(r.threshold));
    manifest.set_metadata("score", "threshold_protocol", r.threshold_protocol);
    return r;
  });
}

std::string eval_report_json(const std::optional<EvalReport>& report, const std::string& dataset,
                             const std::string& hash, double anomaly_ratio, std::size_t length) {
  json j;
  j["toolkit_version"] = toolkit_version();
  j["dataset"] = dataset;
  j["config_hash"] = hash;
  j["length"] = length;
  j["anomaly_ratio"] = anomaly_ratio;
  j["metrics_skipped"] = !report.has_value();
  if (report) {
    j["segments"] = report->segments;
    j["degenerate"] = report->degenerate;
    j["threshold_protocol"] = report->threshold_protocol;
    j["oracle_threshold"] = report->threshold_protocol.rfind("best-f1", 0) == 0;
    j["pa_k_percent"] = report->pa_k_percent;
    j["auroc"] = report->auroc ? json(*report->auroc) : json(nullptr);
    json metrics = json::array();
    for (const MetricReport* m : {&report->f1, &report->f1_pa_k, &report->f1_pa}) {
      metrics.push_back({{"name", m->name},
                         {"threshold", m->threshold},
                         {"precision", m->precision},
                         {"recall", m->recall},
                         {"f1", m->f1},
                         {"tp", m->counts.tp},
                         {"fp", m->counts.fp},
                         {"fn", m->counts.fn},
                         {"threshold_fallback", m->threshold_fallback}});
    }
    j["metrics"] = metrics;
  }
  return j.dump(2) + "\n";
}

EvaluateResult cmd_evaluate(const ExperimentConfig& config) {
  const fs::path dir = run_dir(config);
  if (!fs::exists(dir / "scores.csv") || !fs::exists(dir / "validation_scores.csv")) cmd_score(config);
  Manifest manifest(dir, config);
  return guarded(manifest, "evaluate", [&] {
    const PreparedData prepared = load_prepared(dir);
    const ScoreFile scores = read_scores_csv(dir / "scores.csv");
    const std::vector<double> val = read_validation_scores(dir / "validation_scores.csv");
    const std::string dataset = prepared.metadata.count("dataset") ? prepared.metadata.at("dataset") : "unknown";
    EvaluateResult r;
    double ratio = 0.0;
    double threshold = scores.scores.empty() ? 0.0 : quantile_threshold(val, config.scoring.quantile);
    fs::create_directories(dir / "plots");
    if (scores.labels) {
      const Labels& y = *scores.labels;
      r.report = evaluate_all(scores.scores, y, val, config.scoring.threshold_policy, config.evaluation.pa_k_percent,
                              config.scoring.quantile);
      ratio = r.report->anomaly_ratio;
      threshold = r.report->f1.threshold;
      std::string table = fmt::format("{:<16} | {:>6} | {:>8} | {:>6}\n", "dataset", "F1",
                                      F1Metric::f1_pa_k(config.evaluation.pa_k_percent).name(), "F1_PA");
      table += format_table_row(dataset, *r.report) + "\n";
      table += fmt::format("threshold protocol: {}\n", r.report->threshold_protocol);
      if (config.scoring.threshold_policy == ThresholdPolicy::best_f1) {
        table += "note: best-F1 thresholds are chosen with test labels (oracle protocol)\n";
      }
      io::write_text_file_atomic(dir / "report.txt", table);
      manifest.add_artifact("evaluate", "report_text", dir / "report.txt");
    } else {
      spdlog::warn("test split has no labels; metrics skipped, scores still emitted");
    }
    r.report_json = eval_report_json(r.report, dataset, config_hash(config), ratio, scores.scores.size());
    if (r.report && fs::exists(dir / "window_scores.csv")) {
      const auto ws = read_window_scores(dir / "window_scores.csv");
      const Labels wl = window_labels(*scores.labels, config.preprocess.window, config.preprocess.score_stride);
      const auto pos = std::count(wl.begin(), wl.end(), 1);
      if (ws.size() == wl.size() && pos > 0 && static_cast<std::size_t>(pos) < wl.size()) {
        json j = json::parse(r.report_json);
        j["window_auroc"] = auroc(ws, wl);
        r.report_json = j.dump(2) + "\n";
      }
    }
    io::write_text_file_atomic(dir / "report.json", r.report_json);
    manifest.add_artifact("evaluate", "report", dir / "report.json");

    io::write_text_file_atomic(dir / "plots" / "score_trace.svg",
                               plots::score_trace_svg(scores.scores, threshold, scores.labels ? &*scores.labels : nullptr));
    const Matrix corr = plots::pearson_correlation(prepared.data.train.values);
    io::write_text_file_atomic(dir / "plots" / "correlation.svg",
                               plots::heatmap_svg(corr, prepared.data.train.feature_names));
    manifest.add_artifact("evaluate", "score_trace_plot", dir / "plots" / "score_trace.svg");
    manifest.add_artifact("evaluate", "correlation_plot", dir / "plots" / "correlation.svg");
    return r;
  });
}

DiagnoseResult cmd_diagnose(const ExperimentConfig& config, const std::string& selector) {
  const fs::path dir = run_dir(config);
  Manifest manifest(dir, config);
  return guarded(manifest, "diagnose", [&] {
    const Checkpoint ckpt = require_checkpoint(dir);
    const PreparedData prepared = load_prepared(dir);
    const FeatureExtractor fx = ckpt.model.extractor();
    const ReferenceModel& ref = *ckpt.reference;
    const auto& test = prepared.data.test;
    const int w = fx.config().window;
    const int stride = config.preprocess.score_stride;
    if (test.length() < w) throw DataError("test split is shorter than one window");

    Eigen::Index start = 0;
    if (selector == "highest-score") {
      const auto ws = fs::exists(dir / "window_scores.csv")
                          ? read_window_scores(dir / "window_scores.csv")
                          : window_scores(test.values, fx, ckpt.model.params, ref, config.scoring.divide_by_norm, stride);
      const auto best = std::max_element(ws.begin(), ws.end()) - ws.begin();  // first on ties
      start = static_cast<Eigen::Index>(best) * stride;
    } else {
      const double t = io::parse_number(selector);
      if (!std::isfinite(t)) {
        throw ConfigError(fmt::format("window selector '{}' is neither 'highest-score' nor a timestamp", selector));
      }
      const auto it = std::find(test.timestamps.begin(), test.timestamps.end(), t);
      if (it == test.timestamps.end()) throw DataError(fmt::format("selector {} matches no window", selector));
      const auto row = static_cast<Eigen::Index>(it - test.timestamps.begin());
      start = std::max<Eigen::Index>(0, row - w + 1);
    }

    const Matrix x = test.values.middleRows(start, w);
    const GradientMap gm = input_gradients(x, fx, ckpt.model.params, ref, config.scoring.divide_by_norm);
    DiagnoseResult r;
    r.report = root_causes(gm.g_norm, config.diagnosis.top_k);
    r.report.window_start = start;
    r.window_start = start;
    r.score = anomaly_score(fx.extract(ckpt.model.params, x).z, ref, config.scoring.divide_by_norm);

    const auto& names = test.feature_names;
    const auto name_of = [&](int f) {
      return static_cast<std::size_t>(f) < names.size() ? names[static_cast<std::size_t>(f)] : fmt::format("f{}", f);
    };
    json j;
    j["selector"] = selector;
    j["window_start"] = start;
    j["window_length"] = w;
    j["start_timestamp"] = test.timestamps[static_cast<std::size_t>(start)];
    j["end_timestamp"] = test.timestamps[static_cast<std::size_t>(start + w - 1)];
    j["score"] = r.score;
    j["top_k"] = r.report.top_k;
    json ranking = json::array();
    for (const auto& rc : r.report.ranking) {
      ranking.push_back({{"feature", rc.feature}, {"name", name_of(rc.feature)}, {"count", rc.count}});
    }
    j["ranking"] = ranking;
    j["counts"] = r.report.counts;
    j["per_timestep"] = r.report.per_timestep;
    r.report_json = j.dump(2) + "\n";
    io::write_text_file_atomic(dir / "root_causes.json", r.report_json);

    std::string table = fmt::format("window rows {}..{} (score {:.6g})\n{:<6} {:<24} {:>6}\n", start, start + w - 1,
                                    r.score, "rank", "feature", "count");
    fs::create_directories(dir / "plots");
    const Eigen::Index ctx0 = std::max<Eigen::Index>(0, start - w);
    const Eigen::Index ctx1 = std::min<Eigen::Index>(test.length(), start + 2 * w);
    for (std::size_t i = 0; i < r.report.ranking.size(); ++i) {
      const int f = r.report.ranking[i].feature;
      table += fmt::format("{:<6} {:<24} {:>6}\n", i + 1, name_of(f), r.report.ranking[i].count);
      std::vector<double> trend;
      for (Eigen::Index t = ctx0; t < ctx1; ++t) trend.push_back(test.values(t, f));
      const fs::path plot = dir / "plots" / fmt::format("trend_{}_f{}.svg", i + 1, f);
      io::write_text_file_atomic(plot, plots::trend_svg(trend, fmt::format("#{} {}", i + 1, name_of(f)),
                                                        static_cast<std::size_t>(start - ctx0),
                                                        static_cast<std::size_t>(start - ctx0 + w)));
      manifest.add_artifact("diagnose", plot.filename().string(), plot);
    }
    io::write_text_file_atomic(dir / "root_causes.txt", table);
    manifest.add_artifact("diagnose", "root_causes", dir / "root_causes.json");
    manifest.add_artifact("diagnose", "root_causes_text", dir / "root_causes.txt");
    return r;
  });
}

PipelineResult run_pipeline(const ExperimentConfig& config) {
  PipelineResult r;
  cmd_preprocess(config);
  r.train = cmd_train(config);
  r.score = cmd_score(config);
  r.evaluate = cmd_evaluate(config);
  return r;
}

}  // namespace latad::runner
