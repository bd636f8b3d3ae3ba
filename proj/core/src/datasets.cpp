#include "latad/datasets.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <regex>
#include <set>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "latad/io.hpp"

namespace latad {

namespace fs = std::filesystem;

namespace {

std::string upper(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  return s;
}

std::string canonical_name(const std::string& name) {
  const std::string u = upper(name);
  for (const auto& d : benchmark_descriptors()) {
    if (upper(d.name) == u) return d.name;
  }
  throw ConfigError(fmt::format("unknown benchmark '{}' (expected SWaT, WADI, MSL, SMAP or SMD)", name));
}

void require_file(const fs::path& p, const std::string& dataset) {
  if (!fs::is_regular_file(p)) {
    throw DataError(fmt::format("missing file {}; expected layout for {}: {}", p.string(), dataset,
                                expected_layout(dataset)));
  }
}

std::vector<std::string> feature_names(std::size_t d) {
  std::vector<std::string> names;
  for (std::size_t j = 0; j < d; ++j) names.push_back(fmt::format("f{}", j));
  return names;
}

std::vector<double> index_timestamps(std::size_t n, std::size_t offset = 0) {
  std::vector<double> ts(n);
  for (std::size_t i = 0; i < n; ++i) ts[i] = static_cast<double>(offset + i);
  return ts;
}

Matrix to_matrix(const std::vector<std::vector<double>>& rows, std::size_t d) {
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < d; ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return m;
}

bool all_empty(const std::vector<std::string>& cells) {
  return std::all_of(cells.begin(), cells.end(), [](const std::string& c) { return c.empty(); });
}

// Empty cells are gaps; any other non-numeric cell is a malformed row.
double parse_cell(const std::string& cell, const fs::path& file, std::size_t row_no) {
  if (cell.empty()) return std::nan("");
  const double v = io::parse_number(cell);
  if (std::isnan(v) && upper(cell) != "NAN") {
    throw DataError(fmt::format("{}: malformed value '{}' at row {}", file.string(), cell, row_no));
  }
  return v;
}

struct RawTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> row_numbers;  // 1-based line numbers in the file
};

// Skips preamble lines until one whose first cell matches `first_header_cell`.
RawTable read_table(const fs::path& file, const std::string& first_header_cell) {
  std::ifstream in(file);
  if (!in) throw DataError(fmt::format("cannot open {}", file.string()));
  RawTable t;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto cells = io::split_csv_line(line);
    if (!cells.empty() && upper(cells.front()) == upper(first_header_cell)) {
      t.header = std::move(cells);
      break;
    }
  }
  if (t.header.empty()) {
    throw DataError(fmt::format("{}: no header row starting with '{}'", file.string(), first_header_cell));
  }
  while (std::getline(in, line)) {
    ++line_no;
    auto cells = io::split_csv_line(line);
    if (all_empty(cells)) continue;
    if (cells.size() != t.header.size()) {
      throw DataError(fmt::format("{}: row {} has {} cells, expected {}", file.string(), line_no, cells.size(),
                                  t.header.size()));
    }
    t.rows.push_back(std::move(cells));
    t.row_numbers.push_back(line_no);
  }
  return t;
}

std::uint8_t swat_label(const std::string& cell, const fs::path& file, std::size_t row_no) {
  std::string s;
  for (char c : cell) {
    if (!std::isspace(static_cast<unsigned char>(c))) s.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  if (s == "normal") return 0;
  if (s == "attack") return 1;  // also accepts the "A ttack" spelling in the published file
  throw DataError(fmt::format("{}: row {} has unknown label '{}'", file.string(), row_no, cell));
}

TimeSeriesDataset swat_split(const fs::path& file, SplitRole role) {
  const RawTable t = read_table(file, "Timestamp");
  if (t.header.size() < 3) throw DataError(fmt::format("{}: too few columns", file.string()));
  const std::size_t d = t.header.size() - 2;
  std::vector<std::vector<double>> rows;
  Labels labels;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    std::vector<double> v(d);
    for (std::size_t j = 0; j < d; ++j) v[j] = parse_cell(t.rows[r][j + 1], file, t.row_numbers[r]);
    rows.push_back(std::move(v));
    labels.push_back(swat_label(t.rows[r].back(), file, t.row_numbers[r]));
  }
  TimeSeriesDataset ds;
  ds.role = role;
  ds.values = to_matrix(rows, d);
  ds.timestamps = index_timestamps(rows.size());
  ds.feature_names.assign(t.header.begin() + 1, t.header.end() - 1);
  if (role == SplitRole::test) ds.labels = std::move(labels);
  return ds;
}

LoadedBenchmark load_swat(const fs::path& path) {
  const fs::path train = path / "SWaT_Dataset_Normal_v1.csv";
  const fs::path test = path / "SWaT_Dataset_Attack_v0.csv";
  require_file(train, "SWaT");
  require_file(test, "SWaT");
  LoadedBenchmark out;
  out.train = swat_split(train, SplitRole::train);
  out.test = swat_split(test, SplitRole::test);
  if (out.train.feature_count() != out.test.feature_count()) {
    throw DataError("SWaT train and test files have different column counts");
  }
  return out;
}

LoadedBenchmark load_wadi(const fs::path& path) {
  const fs::path train_file = path / "WADI_14days.csv";
  const fs::path test_file = path / "WADI_attackdataLABLE.csv";
  require_file(train_file, "WADI");
  require_file(test_file, "WADI");
  const RawTable tr = read_table(train_file, "Row");
  const RawTable te = read_table(test_file, "Row");
  // Columns: Row, Date, Time, sensors...; the test file appends the label column.
  if (tr.header.size() < 4) throw DataError(fmt::format("{}: too few columns", train_file.string()));
  const std::size_t d_raw = tr.header.size() - 3;
  if (te.header.size() != d_raw + 4) {
    throw DataError(fmt::format("WADI test file has {} columns, expected {}", te.header.size(), d_raw + 4));
  }
  std::vector<std::vector<double>> train_rows;
  std::vector<bool> seen(d_raw, false);
  for (std::size_t r = 0; r < tr.rows.size(); ++r) {
    std::vector<double> v(d_raw);
    for (std::size_t j = 0; j < d_raw; ++j) {
      v[j] = parse_cell(tr.rows[r][j + 3], train_file, tr.row_numbers[r]);
      if (std::isfinite(v[j])) seen[j] = true;
    }
    train_rows.push_back(std::move(v));
  }
  // Sensors that never report in the training file carry no information.
  std::vector<std::size_t> keep;
  std::vector<std::string> dropped;
  for (std::size_t j = 0; j < d_raw; ++j) {
    if (seen[j]) keep.push_back(j);
    else dropped.push_back(tr.header[j + 3]);
  }
  std::vector<std::vector<double>> test_rows;
  Labels labels;
  for (std::size_t r = 0; r < te.rows.size(); ++r) {
    std::vector<double> v;
    for (std::size_t j : keep) v.push_back(parse_cell(te.rows[r][j + 3], test_file, te.row_numbers[r]));
    test_rows.push_back(std::move(v));
    const double l = io::parse_number(te.rows[r].back());
    if (l == 1.0) labels.push_back(0);
    else if (l == -1.0) labels.push_back(1);
    else throw DataError(fmt::format("{}: row {} label must be 1 or -1", test_file.string(), te.row_numbers[r]));
  }
  for (auto& row : train_rows) {
    std::vector<double> v;
    for (std::size_t j : keep) v.push_back(row[j]);
    row = std::move(v);
  }
  LoadedBenchmark out;
  out.train.role = SplitRole::train;
  out.train.values = to_matrix(train_rows, keep.size());
  out.train.timestamps = index_timestamps(train_rows.size());
  for (std::size_t j : keep) out.train.feature_names.push_back(tr.header[j + 3]);
  out.test.role = SplitRole::test;
  out.test.values = to_matrix(test_rows, keep.size());
  out.test.timestamps = index_timestamps(test_rows.size());
  out.test.feature_names = out.train.feature_names;
  out.test.labels = std::move(labels);
  out.metadata["dropped_empty_columns"] = fmt::format("{}", fmt::join(dropped, ";"));
  return out;
}

struct ChannelInfo {
  std::string id;
  std::vector<std::pair<std::size_t, std::size_t>> sequences;  // inclusive
};

std::vector<ChannelInfo> read_labeled_anomalies(const fs::path& file, const std::string& spacecraft) {
  const RawTable t = read_table(file, "chan_id");
  const auto col = [&](const std::string& name) {
    const auto it = std::find(t.header.begin(), t.header.end(), name);
    if (it == t.header.end()) throw DataError(fmt::format("{}: missing column '{}'", file.string(), name));
    return static_cast<std::size_t>(it - t.header.begin());
  };
  const std::size_t c_id = col("chan_id");
  const std::size_t c_sc = col("spacecraft");
  const std::size_t c_seq = col("anomaly_sequences");
  const std::regex pair_re(R"(\[\s*(\d+)\s*,\s*(\d+)\s*\])");
  std::vector<ChannelInfo> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    if (upper(t.rows[r][c_sc]) != upper(spacecraft)) continue;
    ChannelInfo info;
    info.id = t.rows[r][c_id];
    const std::string& seq = t.rows[r][c_seq];
    for (auto it = std::sregex_iterator(seq.begin(), seq.end(), pair_re); it != std::sregex_iterator(); ++it) {
      const std::size_t a = std::stoul((*it)[1].str());
      const std::size_t b = std::stoul((*it)[2].str());
      if (b < a) throw DataError(fmt::format("{}: row {} has a reversed anomaly interval", file.string(), t.row_numbers[r]));
      info.sequences.emplace_back(a, b);
    }
    out.push_back(std::move(info));
  }
  std::sort(out.begin(), out.end(), [](const ChannelInfo& a, const ChannelInfo& b) { return a.id < b.id; });
  return out;
}

LoadedBenchmark load_telemetry(const fs::path& path, const std::string& name) {
  const fs::path table = path / "labeled_anomalies.csv";
  require_file(table, name);
  const auto channels = read_labeled_anomalies(table, name);
  if (channels.empty()) throw DataError(fmt::format("{}: no channels for spacecraft {}", table.string(), name));
  std::vector<Matrix> train_parts;
  std::vector<Matrix> test_parts;
  Labels labels;
  Eigen::Index d = -1;
  std::vector<std::string> order;
  for (const auto& ch : channels) {
    const fs::path tr = path / "train" / (ch.id + ".npy");
    const fs::path te = path / "test" / (ch.id + ".npy");
    require_file(tr, name);
    require_file(te, name);
    Matrix a = io::read_npy(tr);
    Matrix b = io::read_npy(te);
    if (d < 0) d = a.cols();
    if (a.cols() != d || b.cols() != d) {
      throw DataError(fmt::format("channel {} has {} / {} columns, expected {}", ch.id, a.cols(), b.cols(), d));
    }
    Labels y(static_cast<std::size_t>(b.rows()), 0);
    for (const auto& [s, e] : ch.sequences) {
      if (e >= y.size()) throw DataError(fmt::format("channel {}: anomaly interval [{}, {}] exceeds test length {}", ch.id, s, e, y.size()));
      std::fill(y.begin() + static_cast<std::ptrdiff_t>(s), y.begin() + static_cast<std::ptrdiff_t>(e) + 1, 1);
    }
    labels.insert(labels.end(), y.begin(), y.end());
    train_parts.push_back(std::move(a));
    test_parts.push_back(std::move(b));
    order.push_back(ch.id);
  }
  const auto stack = [d](const std::vector<Matrix>& parts) {
    Eigen::Index n = 0;
    for (const auto& p : parts) n += p.rows();
    Matrix m(n, d);
    Eigen::Index at = 0;
    for (const auto& p : parts) {
      m.middleRows(at, p.rows()) = p;
      at += p.rows();
    }
    return m;
  };
  LoadedBenchmark out;
  out.train.role = SplitRole::train;
  out.train.values = stack(train_parts);
  out.train.timestamps = index_timestamps(static_cast<std::size_t>(out.train.values.rows()));
  out.train.feature_names = feature_names(static_cast<std::size_t>(d));
  out.test.role = SplitRole::test;
  out.test.values = stack(test_parts);
  out.test.timestamps = index_timestamps(static_cast<std::size_t>(out.test.values.rows()));
  out.test.feature_names = out.train.feature_names;
  out.test.labels = std::move(labels);
  out.metadata["channel_order"] = fmt::format("{}", fmt::join(order, ","));
  return out;
}

Matrix read_text_matrix(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw DataError(fmt::format("cannot open {}", file.string()));
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  std::size_t d = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto cells = io::split_csv_line(line);
    if (all_empty(cells)) continue;
    if (rows.empty()) d = cells.size();
    if (cells.size() != d) {
      throw DataError(fmt::format("{}: row {} has {} values, expected {}", file.string(), line_no, cells.size(), d));
    }
    std::vector<double> v(d);
    for (std::size_t j = 0; j < d; ++j) v[j] = parse_cell(cells[j], file, line_no);
    rows.push_back(std::move(v));
  }
  return to_matrix(rows, d);
}

LoadedBenchmark load_smd(const fs::path& path, const std::string& machine) {
  const fs::path tr = path / "train" / (machine + ".txt");
  const fs::path te = path / "test" / (machine + ".txt");
  const fs::path lb = path / "test_label" / (machine + ".txt");
  require_file(tr, "SMD");
  require_file(te, "SMD");
  require_file(lb, "SMD");
  LoadedBenchmark out;
  out.train.role = SplitRole::train;
  out.train.values = read_text_matrix(tr);
  out.train.timestamps = index_timestamps(static_cast<std::size_t>(out.train.values.rows()));
  out.train.feature_names = feature_names(static_cast<std::size_t>(out.train.values.cols()));
  out.test.role = SplitRole::test;
  out.test.values = read_text_matrix(te);
  out.test.timestamps = index_timestamps(static_cast<std::size_t>(out.test.values.rows()));
  out.test.feature_names = out.train.feature_names;
  if (out.test.values.cols() != out.train.values.cols()) throw DataError("SMD train and test widths differ");
  const Matrix y = read_text_matrix(lb);
  if (y.cols() != 1 || y.rows() != out.test.values.rows()) {
    throw DataError(fmt::format("{}: expected one label per test row", lb.string()));
  }
  Labels labels;
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    if (y(i, 0) != 0.0 && y(i, 0) != 1.0) throw DataError(fmt::format("{}: row {} label is not 0/1", lb.string(), i + 1));
    labels.push_back(static_cast<std::uint8_t>(y(i, 0)));
  }
  out.test.labels = std::move(labels);
  out.metadata["machine"] = machine;
  return out;
}

}  // namespace

const std::vector<DatasetDescriptor>& benchmark_descriptors() {
  static const std::vector<DatasetDescriptor> table{
      {"SWaT", 495000, 449919, 0.1233, 51},
      {"WADI", 784537, 172801, 0.0577, 123},
      {"MSL", 58317, 73729, 0.105, 55},
      {"SMAP", 135183, 427617, 0.128, 25},
      {"SMD", 25300, 25300, 0.0421, 38},
  };
  return table;
}

std::optional<DatasetDescriptor> find_descriptor(const std::string& name) {
  for (const auto& d : benchmark_descriptors()) {
    if (upper(d.name) == upper(name)) return d;
  }
  return std::nullopt;
}

std::string LoaderWarning::message() const {
  return fmt::format("{}: {} is {:g}, expected {:g}", dataset, field, actual, expected);
}

std::vector<LoaderWarning> validate_against(const DatasetDescriptor& desc, const TimeSeriesDataset& train,
                                            const TimeSeriesDataset& test, double ratio_tolerance) {
  std::vector<LoaderWarning> out;
  const auto check = [&](const std::string& field, double expected, double actual, double tol) {
    if (std::abs(expected - actual) > tol) out.push_back({desc.name, field, expected, actual});
  };
  check("train_length", static_cast<double>(desc.expected_train_len), static_cast<double>(train.length()), 0.0);
  check("test_length", static_cast<double>(desc.expected_test_len), static_cast<double>(test.length()), 0.0);
  check("feature_count", static_cast<double>(desc.expected_feature_count), static_cast<double>(train.feature_count()), 0.0);
  if (test.labels && !test.labels->empty()) {
    const auto pos = std::count(test.labels->begin(), test.labels->end(), 1);
    check("anomaly_ratio", desc.expected_anomaly_ratio,
          static_cast<double>(pos) / static_cast<double>(test.labels->size()), ratio_tolerance);
  } else {
    out.push_back({desc.name, "anomaly_ratio", desc.expected_anomaly_ratio, std::nan("")});
  }
  return out;
}

std::string expected_layout(const std::string& name) {
  const std::string u = upper(name);
  if (u == "SWAT") return "<path>/SWaT_Dataset_Normal_v1.csv and <path>/SWaT_Dataset_Attack_v0.csv";
  if (u == "WADI") return "<path>/WADI_14days.csv and <path>/WADI_attackdataLABLE.csv";
  if (u == "MSL" || u == "SMAP") {
    return "<path>/labeled_anomalies.csv, <path>/train/<chan_id>.npy and <path>/test/<chan_id>.npy";
  }
  if (u == "SMD") return "<path>/train/<machine>.txt, <path>/test/<machine>.txt and <path>/test_label/<machine>.txt";
  return "unknown dataset";
}

LoadedBenchmark load_benchmark(const std::string& name, const fs::path& path, const LoaderOptions& options) {
  const std::string canon = canonical_name(name);
  if (!fs::is_directory(path)) {
    throw DataError(fmt::format("dataset directory {} does not exist; expected layout for {}: {}", path.string(),
                                canon, expected_layout(canon)));
  }
  LoadedBenchmark out;
  if (canon == "SWaT") out = load_swat(path);
  else if (canon == "WADI") out = load_wadi(path);
  else if (canon == "MSL" || canon == "SMAP") out = load_telemetry(path, canon);
  else out = load_smd(path, options.smd_machine);
  out.train.validate();
  out.test.validate();
  out.metadata["dataset"] = canon;
  out.metadata["path"] = path.string();
  out.warnings = validate_against(*find_descriptor(canon), out.train, out.test, options.ratio_tolerance);
  for (const auto& w : out.warnings) spdlog::warn("{}", w.message());
  return out;
}

std::string to_string(AnomalyType type) {
  switch (type) {
    case AnomalyType::point: return "point";
    case AnomalyType::contextual: return "contextual";
    case AnomalyType::collective: return "collective";
  }
  return "point";
}

AnomalyType anomaly_type_from_string(const std::string& s) {
  if (s == "point") return AnomalyType::point;
  if (s == "contextual") return AnomalyType::contextual;
  if (s == "collective") return AnomalyType::collective;
  throw ConfigError(fmt::format("unknown anomaly type '{}'", s));
}

void SynthConfig::validate() const {
  if (features < 1) throw ConfigError("synth: features must be >= 1");
  if (train_length < 2 || test_length < 1) throw ConfigError("synth: lengths must be positive");
  if (periods.empty() || periods.size() != amplitudes.size()) {
    throw ConfigError("synth: periods and amplitudes must be non-empty and equally long");
  }
  for (double p : periods) {
    if (!(p > 0.0)) throw ConfigError("synth: periods must be positive");
  }
  if (mixing.size() != 0 &&
      (mixing.rows() != features || mixing.cols() != static_cast<Eigen::Index>(periods.size()))) {
    throw ConfigError(fmt::format("synth: mixing matrix must be {}x{}", features, periods.size()));
  }
  if (!(noise_std >= 0.0)) throw ConfigError("synth: noise_std must be >= 0");
  if (!(collective_period > 0.0)) throw ConfigError("synth: collective_period must be positive");
  std::vector<std::pair<std::size_t, std::size_t>> spans;
  for (const auto& a : plan) {
    if (a.length == 0) throw ConfigError("synth: anomaly length must be >= 1");
    if (a.start + a.length > test_length) {
      throw ConfigError(fmt::format("synth: anomaly [{}, {}) exceeds the test region of length {}", a.start,
                                    a.start + a.length, test_length));
    }
    if (!std::isfinite(a.magnitude)) throw ConfigError("synth: anomaly magnitude must be finite");
    for (int f : a.features) {
      if (f < 0 || f >= features) throw ConfigError(fmt::format("synth: anomaly feature {} out of range", f));
    }
    spans.emplace_back(a.start, a.start + a.length);
  }
  std::sort(spans.begin(), spans.end());
  for (std::size_t i = 1; i < spans.size(); ++i) {
    if (spans[i].first < spans[i - 1].second) {
      throw ConfigError(fmt::format("synth: overlapping anomaly intervals [{}, {}) and [{}, {})", spans[i - 1].first,
                                    spans[i - 1].second, spans[i].first, spans[i].second));
    }
  }
}

SynthData synth_generate(const SynthConfig& config) {
  config.validate();
  const auto d = static_cast<Eigen::Index>(config.features);
  const auto m = static_cast<Eigen::Index>(config.periods.size());
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  Matrix mixing = config.mixing;
  if (mixing.size() == 0) {
    mixing.resize(d, m);
    for (Eigen::Index i = 0; i < d; ++i)
      for (Eigen::Index k = 0; k < m; ++k) mixing(i, k) = unit(rng);
  }
  std::vector<double> phase(static_cast<std::size_t>(m));
  for (auto& p : phase) p = std::numbers::pi * (unit(rng) + 1.0);

  const std::size_t total = config.train_length + config.test_length;
  Matrix all(static_cast<Eigen::Index>(total), d);
  for (std::size_t t = 0; t < total; ++t) {
    for (Eigen::Index i = 0; i < d; ++i) {
      double v = 0.0;
      for (Eigen::Index k = 0; k < m; ++k) {
        const auto ks = static_cast<std::size_t>(k);
        v += mixing(i, k) * config.amplitudes[ks] *
             std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / config.periods[ks] + phase[ks]);
      }
      all(static_cast<Eigen::Index>(t), i) = v + config.noise_std * gauss(rng);
    }
  }

  SynthData out;
  std::vector<std::string> names;
  for (Eigen::Index i = 0; i < d; ++i) names.push_back(fmt::format("x{}", i));
  out.train.role = SplitRole::train;
  out.train.values = all.topRows(static_cast<Eigen::Index>(config.train_length));
  out.train.timestamps = index_timestamps(config.train_length);
  out.train.feature_names = names;
  out.test.role = SplitRole::test;
  out.test.values = all.bottomRows(static_cast<Eigen::Index>(config.test_length));
  out.test.timestamps = index_timestamps(config.test_length, config.train_length);
  out.test.feature_names = names;

  const Matrix& tr = out.train.values;
  const RowVector mean = tr.colwise().mean();
  const RowVector lo = tr.colwise().minCoeff();
  const RowVector hi = tr.colwise().maxCoeff();
  RowVector sd(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    sd(i) = std::sqrt((tr.col(i).array() - mean(i)).square().mean());
    if (sd(i) == 0.0) sd(i) = 1.0;
  }

  Labels labels(config.test_length, 0);
  Matrix& x = out.test.values;
  for (const auto& a : config.plan) {
    std::vector<int> feats = a.features;
    if (feats.empty()) {
      for (int i = 0; i < config.features; ++i) feats.push_back(i);
    }
    for (std::size_t k = 0; k < a.length; ++k) {
      const auto t = static_cast<Eigen::Index>(a.start + k);
      labels[a.start + k] = 1;
      for (int f : feats) {
        const double s = a.magnitude * sd(f);
        switch (a.type) {
          case AnomalyType::point:
            x(t, f) += s;
            break;
          case AnomalyType::contextual: {
            // A level/trend shift that stays inside the training range.
            const double ramp = static_cast<double>(k + 1) / static_cast<double>(a.length);
            x(t, f) = std::clamp(x(t, f) + s * ramp, lo(f), hi(f));
            break;
          }
          case AnomalyType::collective: {
            const double phase_pos = std::fmod(static_cast<double>(k), config.collective_period);
            const double square = phase_pos < config.collective_period / 2.0 ? 1.0 : -1.0;
            x(t, f) = mean(f) + s * square + config.noise_std * gauss(rng);
            break;
          }
        }
      }
    }
  }
  out.test.labels = std::move(labels);
  out.train.validate();
  out.test.validate();
  return out;
}

std::vector<PlannedAnomaly> standard_anomaly_plan(std::size_t test_length, int features, std::uint64_t seed) {
  if (features < 1) throw ConfigError("standard plan needs at least one feature");
  std::mt19937_64 rng(seed ^ 0x5eedULL);
  std::uniform_int_distribution<int> pick(0, features - 1);
  const AnomalyType order[] = {AnomalyType::point, AnomalyType::contextual, AnomalyType::collective,
                               AnomalyType::point, AnomalyType::contextual, AnomalyType::collective};
  const std::size_t slot = test_length / 6;
  std::vector<PlannedAnomaly> plan;
  for (std::size_t i = 0; i < 6; ++i) {
    PlannedAnomaly a;
    a.type = order[i];
    switch (a.type) {
      case AnomalyType::point:
        a.length = std::max<std::size_t>(1, slot / 30);
        a.magnitude = 6.0;
        a.features = {pick(rng)};
        break;
      case AnomalyType::contextual:
        a.length = std::max<std::size_t>(1, slot / 3);
        a.magnitude = 3.0;
        a.features = {pick(rng)};
        break;
      case AnomalyType::collective:
        a.length = std::max<std::size_t>(1, slot / 4);
        a.magnitude = 1.5;
        break;
    }
    a.length = std::min(a.length, slot);
    std::uniform_int_distribution<std::size_t> jitter(0, slot - a.length);
    a.start = i * slot + jitter(rng);
    plan.push_back(a);
  }
  return plan;
}

}  // namespace latad
