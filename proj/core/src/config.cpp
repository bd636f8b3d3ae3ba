#include "latad/config.hpp"

#include <set>
#include <sstream>

#include <fmt/format.h>
#include <yaml-cpp/yaml.h>

#include "latad/io.hpp"

namespace latad {

namespace {

// Doubles are written in shortest round-trip form so the YAML reparses exactly.
YAML::Node num(double v) { return YAML::Node(fmt::format("{}", v)); }

YAML::Node doubles(const std::vector<double>& v) {
  YAML::Node n(YAML::NodeType::Sequence);
  for (double x : v) n.push_back(num(x));
  n.SetStyle(YAML::EmitterStyle::Flow);
  return n;
}

class Section {
 public:
  Section(const YAML::Node& node, std::string path) : path_(std::move(path)) {
    if (node && !node.IsNull()) node_.reset(node);  // absent or empty sections keep defaults
    if (node_ && !node_.IsNull() && !node_.IsMap()) throw ConfigError(fmt::format("config section '{}' must be a mapping", path_));
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    if (!node_ || node_.IsNull() || !node_[key]) return;
    try {
      out = node_[key].as<T>();
    } catch (const YAML::Exception&) {
      throw ConfigError(fmt::format("config key '{}' has an invalid value", qualified(key)));
    }
  }

  YAML::Node child(const std::string& key) {
    seen_.insert(key);
    return node_ && !node_.IsNull() ? node_[key] : YAML::Node(YAML::NodeType::Null);
  }

  std::string qualified(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    if (!node_ || node_.IsNull()) return;
    for (const auto& kv : node_) {
      const auto key = kv.first.as<std::string>();
      if (!seen_.count(key)) throw ConfigError(fmt::format("unknown config key '{}'", qualified(key)));
    }
  }

 private:
  YAML::Node node_;
  std::string path_;
  std::set<std::string> seen_;
};

YAML::Node plan_to_node(const std::vector<PlannedAnomaly>& plan) {
  YAML::Node seq(YAML::NodeType::Sequence);
  for (const auto& a : plan) {
    YAML::Node n;
    n["type"] = to_string(a.type);
    n["start"] = a.start;
    n["length"] = a.length;
    n["magnitude"] = num(a.magnitude);
    YAML::Node f(YAML::NodeType::Sequence);
    for (int i : a.features) f.push_back(i);
    f.SetStyle(YAML::EmitterStyle::Flow);
    n["features"] = f;
    seq.push_back(n);
  }
  return seq;
}

std::vector<PlannedAnomaly> plan_from_node(const YAML::Node& node) {
  std::vector<PlannedAnomaly> plan;
  if (!node || node.IsNull()) return plan;
  if (!node.IsSequence()) throw ConfigError("dataset.synth.plan must be a list");
  for (std::size_t i = 0; i < node.size(); ++i) {
    Section s(node[i], fmt::format("dataset.synth.plan[{}]", i));
    PlannedAnomaly a;
    std::string type = to_string(a.type);
    s.get("type", type);
    a.type = anomaly_type_from_string(type);
    s.get("start", a.start);
    s.get("length", a.length);
    s.get("magnitude", a.magnitude);
    s.get("features", a.features);
    s.finish();
    plan.push_back(a);
  }
  return plan;
}

YAML::Node to_node(const ExperimentConfig& c) {
  YAML::Node root;
  root["seed"] = c.seed;
  root["output_dir"] = c.output_dir;
  root["data_root"] = c.data_root;

  YAML::Node ds;
  ds["kind"] = c.dataset.kind;
  ds["name"] = c.dataset.name;
  ds["path"] = c.dataset.path;
  ds["train_csv"] = c.dataset.train_csv;
  ds["test_csv"] = c.dataset.test_csv;
  ds["smd_machine"] = c.dataset.smd_machine;
  ds["standard_plan"] = c.dataset.standard_plan;
  YAML::Node sy;
  const SynthConfig& s = c.dataset.synth;
  sy["features"] = s.features;
  sy["train_length"] = s.train_length;
  sy["test_length"] = s.test_length;
  sy["periods"] = doubles(s.periods);
  sy["amplitudes"] = doubles(s.amplitudes);
  YAML::Node mix(YAML::NodeType::Sequence);
  for (Eigen::Index i = 0; i < s.mixing.rows(); ++i) {
    std::vector<double> row(s.mixing.row(i).begin(), s.mixing.row(i).end());
    mix.push_back(doubles(row));
  }
  if (mix.size() == 0) mix.SetStyle(YAML::EmitterStyle::Flow);
  sy["mixing"] = mix;
  sy["noise_std"] = num(s.noise_std);
  sy["collective_period"] = num(s.collective_period);
  YAML::Node plan = plan_to_node(s.plan);
  if (plan.size() == 0) plan.SetStyle(YAML::EmitterStyle::Flow);
  sy["plan"] = plan;
  ds["synth"] = sy;
  root["dataset"] = ds;

  YAML::Node pp;
  pp["downsample"] = c.preprocess.downsample;
  pp["window"] = c.preprocess.window;
  pp["train_stride"] = c.preprocess.train_stride;
  pp["score_stride"] = c.preprocess.score_stride;
  pp["iqr_fence"] = num(c.preprocess.iqr_fence);
  pp["iqr_enabled"] = c.preprocess.iqr_enabled;
  pp["validation_fraction"] = num(c.preprocess.validation_fraction);
  root["preprocess"] = pp;

  YAML::Node m;
  m["d_model"] = c.model.d_model;
  m["conv_kernel"] = c.model.conv_kernel;
  m["transformer_layers"] = c.model.transformer_layers;
  m["transformer_heads"] = c.model.transformer_heads;
  m["ffn_width"] = c.model.ffn_width;
  m["tcn_levels"] = c.model.tcn_levels;
  m["tcn_kernel"] = c.model.tcn_kernel;
  m["leaky_slope"] = num(c.model.leaky_slope);
  m["use_gat"] = c.model.use_gat;
  m["use_transformer"] = c.model.use_transformer;
  m["use_tcn"] = c.model.use_tcn;
  m["negatives"] = c.generators.count;
  m["generator_hidden"] = c.generators.hidden;
  root["model"] = m;

  YAML::Node t;
  t["lambda"] = num(c.train.lambda);
  t["margin_min"] = num(c.train.margin_min);
  t["margin_max"] = num(c.train.margin_max);
  t["learning_rate"] = num(c.train.learning_rate);
  t["clip_norm"] = num(c.train.clip_norm);
  t["batch_size"] = c.train.batch_size;
  t["max_epoch"] = c.train.max_epoch;
  t["adf_p_threshold"] = num(c.train.neighborhood.adf_p_threshold);
  t["eta_max"] = c.train.neighborhood.eta_max;
  t["use_comp"] = c.train.use_comp;
  t["use_reg"] = c.train.use_reg;
  root["train"] = t;

  YAML::Node sc;
  sc["k"] = c.scoring.k;
  sc["coreset_fraction"] = num(c.scoring.coreset_fraction);
  sc["max_iterations"] = c.scoring.max_iterations;
  sc["threshold_policy"] = to_string(c.scoring.threshold_policy);
  sc["quantile"] = num(c.scoring.quantile);
  sc["divide_by_norm"] = c.scoring.divide_by_norm;
  root["scoring"] = sc;

  YAML::Node ev;
  ev["pa_k_percent"] = num(c.evaluation.pa_k_percent);
  root["evaluation"] = ev;

  YAML::Node dg;
  dg["top_k"] = c.diagnosis.top_k;
  dg["selector"] = c.diagnosis.selector;
  root["diagnosis"] = dg;
  return root;
}

ExperimentConfig from_node(const YAML::Node& root) {
  ExperimentConfig c = default_config();
  if (root && !root.IsMap() && !root.IsNull()) throw ConfigError("config must be a mapping");
  Section top(root.IsMap() ? root : YAML::Node(), "");
  top.get("seed", c.seed);
  top.get("output_dir", c.output_dir);
  top.get("data_root", c.data_root);

  Section ds(top.child("dataset"), "dataset");
  ds.get("kind", c.dataset.kind);
  ds.get("name", c.dataset.name);
  ds.get("path", c.dataset.path);
  ds.get("train_csv", c.dataset.train_csv);
  ds.get("test_csv", c.dataset.test_csv);
  ds.get("smd_machine", c.dataset.smd_machine);
  ds.get("standard_plan", c.dataset.standard_plan);
  {
    Section sy(ds.child("synth"), "dataset.synth");
    SynthConfig& s = c.dataset.synth;
    sy.get("features", s.features);
    sy.get("train_length", s.train_length);
    sy.get("test_length", s.test_length);
    sy.get("periods", s.periods);
    sy.get("amplitudes", s.amplitudes);
    std::vector<std::vector<double>> mix;
    sy.get("mixing", mix);
    if (!mix.empty()) {
      s.mixing.resize(static_cast<Eigen::Index>(mix.size()), static_cast<Eigen::Index>(mix.front().size()));
      for (std::size_t i = 0; i < mix.size(); ++i) {
        if (mix[i].size() != mix.front().size()) throw ConfigError("dataset.synth.mixing rows differ in length");
        for (std::size_t j = 0; j < mix[i].size(); ++j) {
          s.mixing(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = mix[i][j];
        }
      }
    } else {
      s.mixing.resize(0, 0);
    }
    sy.get("noise_std", s.noise_std);
    sy.get("collective_period", s.collective_period);
    s.plan = plan_from_node(sy.child("plan"));
    sy.finish();
  }
  ds.finish();

  Section pp(top.child("preprocess"), "preprocess");
  pp.get("downsample", c.preprocess.downsample);
  pp.get("window", c.preprocess.window);
  pp.get("train_stride", c.preprocess.train_stride);
  pp.get("score_stride", c.preprocess.score_stride);
  pp.get("iqr_fence", c.preprocess.iqr_fence);
  pp.get("iqr_enabled", c.preprocess.iqr_enabled);
  pp.get("validation_fraction", c.preprocess.validation_fraction);
  pp.finish();

  Section m(top.child("model"), "model");
  m.get("d_model", c.model.d_model);
  m.get("conv_kernel", c.model.conv_kernel);
  m.get("transformer_layers", c.model.transformer_layers);
  m.get("transformer_heads", c.model.transformer_heads);
  m.get("ffn_width", c.model.ffn_width);
  m.get("tcn_levels", c.model.tcn_levels);
  m.get("tcn_kernel", c.model.tcn_kernel);
  m.get("leaky_slope", c.model.leaky_slope);
  m.get("use_gat", c.model.use_gat);
  m.get("use_transformer", c.model.use_transformer);
  m.get("use_tcn", c.model.use_tcn);
  m.get("negatives", c.generators.count);
  m.get("generator_hidden", c.generators.hidden);
  m.finish();

  Section t(top.child("train"), "train");
  t.get("lambda", c.train.lambda);
  t.get("margin_min", c.train.margin_min);
  t.get("margin_max", c.train.margin_max);
  t.get("learning_rate", c.train.learning_rate);
  t.get("clip_norm", c.train.clip_norm);
  t.get("batch_size", c.train.batch_size);
  t.get("max_epoch", c.train.max_epoch);
  t.get("adf_p_threshold", c.train.neighborhood.adf_p_threshold);
  t.get("eta_max", c.train.neighborhood.eta_max);
  t.get("use_comp", c.train.use_comp);
  t.get("use_reg", c.train.use_reg);
  t.finish();

  Section sc(top.child("scoring"), "scoring");
  sc.get("k", c.scoring.k);
  sc.get("coreset_fraction", c.scoring.coreset_fraction);
  sc.get("max_iterations", c.scoring.max_iterations);
  std::string policy = to_string(c.scoring.threshold_policy);
  sc.get("threshold_policy", policy);
  c.scoring.threshold_policy = threshold_policy_from_string(policy);
  sc.get("quantile", c.scoring.quantile);
  sc.get("divide_by_norm", c.scoring.divide_by_norm);
  sc.finish();

  Section ev(top.child("evaluation"), "evaluation");
  ev.get("pa_k_percent", c.evaluation.pa_k_percent);
  ev.finish();

  Section dg(top.child("diagnosis"), "diagnosis");
  dg.get("top_k", c.diagnosis.top_k);
  dg.get("selector", c.diagnosis.selector);
  dg.finish();

  top.finish();
  resolve_seeds(c);
  c.validate();
  return c;
}

}  // namespace

std::string to_string(ThresholdPolicy policy) {
  return policy == ThresholdPolicy::quantile ? "quantile" : "best_f1";
}

ThresholdPolicy threshold_policy_from_string(const std::string& s) {
  if (s == "best_f1") return ThresholdPolicy::best_f1;
  if (s == "quantile") return ThresholdPolicy::quantile;
  throw ConfigError(fmt::format("unknown threshold policy '{}' (best_f1 or quantile)", s));
}

void ExperimentConfig::validate() const {
  if (dataset.kind != "synthetic" && dataset.kind != "benchmark" && dataset.kind != "csv") {
    throw ConfigError(fmt::format("dataset.kind must be synthetic, benchmark or csv, got '{}'", dataset.kind));
  }
  if (dataset.kind == "benchmark" && !find_descriptor(dataset.name)) {
    throw ConfigError(fmt::format("unknown benchmark '{}'", dataset.name));
  }
  if (dataset.kind == "csv" && (dataset.train_csv.empty() || dataset.test_csv.empty())) {
    throw ConfigError("dataset.train_csv and dataset.test_csv are required for csv datasets");
  }
  if (dataset.kind == "synthetic") dataset.synth.validate();
  if (preprocess.downsample < 1) throw ConfigError("preprocess.downsample must be >= 1");
  if (preprocess.window < 2) throw ConfigError("preprocess.window must be >= 2");
  if (preprocess.train_stride < 1 || preprocess.score_stride < 1) throw ConfigError("strides must be >= 1");
  if (preprocess.validation_fraction < 0.0 || preprocess.validation_fraction >= 1.0) {
    throw ConfigError("preprocess.validation_fraction must be in [0, 1)");
  }
  model.validate();
  generators.validate();
  train.validate();
  if (scoring.k < 1) throw ConfigError("scoring.k must be >= 1");
  if (scoring.coreset_fraction <= 0.0 || scoring.coreset_fraction > 1.0) {
    throw ConfigError("scoring.coreset_fraction must be in (0, 1]");
  }
  if (scoring.quantile < 0.0 || scoring.quantile > 1.0) throw ConfigError("scoring.quantile must be in [0, 1]");
  if (evaluation.pa_k_percent < 0.0 || evaluation.pa_k_percent > 100.0) {
    throw ConfigError("evaluation.pa_k_percent must be in [0, 100]");
  }
  if (diagnosis.top_k < 1) throw ConfigError("diagnosis.top_k must be >= 1");
}

ExperimentConfig default_config() {
  ExperimentConfig c;
  resolve_seeds(c);
  return c;
}

void resolve_seeds(ExperimentConfig& c) {
  c.dataset.synth.seed = c.seed;
  c.model.seed = c.seed;
  c.generators.seed = c.seed + 1;
  c.train.seed = c.seed;
  c.train.window_stride = c.preprocess.train_stride;
  c.model.window = c.preprocess.window;
  c.generators.window = c.preprocess.window;
  c.generators.leaky_slope = c.model.leaky_slope;
  if (c.dataset.kind == "synthetic") {
    c.model.features = c.dataset.synth.features;
    c.generators.features = c.dataset.synth.features;
  }
}

ExperimentConfig config_from_yaml(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(fmt::format("config is not valid YAML: {}", e.what()));
  }
  return from_node(root);
}

ExperimentConfig load_config(const std::string& path) {
  std::string text;
  try {
    text = io::read_text_file(path);
  } catch (const DataError&) {
    throw ConfigError(fmt::format("cannot read config file {}", path));
  }
  return config_from_yaml(text);
}

std::string config_to_yaml(const ExperimentConfig& config) {
  YAML::Emitter out;
  out << to_node(config);
  return std::string(out.c_str()) + "\n";
}

std::string canonical_config_text(const ExperimentConfig& config) {
  ExperimentConfig c = config;
  c.output_dir.clear();
  return config_to_yaml(c);
}

std::string config_hash(const ExperimentConfig& config) { return io::sha256_hex(canonical_config_text(config)); }

namespace {

void set_in_node(YAML::Node& root, const std::string& key, const std::string& value) {
  std::vector<std::string> parts;
  std::stringstream ss(key);
  for (std::string p; std::getline(ss, p, '.');) parts.push_back(p);
  if (parts.empty()) throw ConfigError("empty override key");
  YAML::Node cur = root;
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!cur.IsMap() || !cur[parts[i]]) throw ConfigError(fmt::format("unknown config key '{}'", key));
    cur.reset(cur[parts[i]]);  // rebind; plain assignment would overwrite the node
  }
  if (!cur.IsMap() || !cur[parts.back()]) throw ConfigError(fmt::format("unknown config key '{}'", key));
  YAML::Node parsed;
  try {
    parsed = YAML::Load(value);
  } catch (const YAML::Exception&) {
    throw ConfigError(fmt::format("invalid value '{}' for '{}'", value, key));
  }
  cur[parts.back()] = parsed;
}

std::pair<std::string, std::string> split_assignment(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError(fmt::format("override '{}' is not key=value", assignment));
  return {assignment.substr(0, eq), assignment.substr(eq + 1)};
}

}  // namespace

void apply_override(ExperimentConfig& config, const std::string& key, const std::string& value) {
  YAML::Node root = to_node(config);
  set_in_node(root, key, value);
  config = from_node(root);
}

void apply_override(ExperimentConfig& config, const std::string& assignment) {
  const auto [key, value] = split_assignment(assignment);
  apply_override(config, key, value);
}

void apply_overrides(ExperimentConfig& config, const std::vector<std::string>& assignments) {
  YAML::Node root = to_node(config);
  for (const auto& a : assignments) {
    const auto [key, value] = split_assignment(a);
    set_in_node(root, key, value);
  }
  config = from_node(root);
}

}  // namespace latad
