#include "latad/io.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <regex>
#include <sstream>

#include <fmt/format.h>
#include <openssl/evp.h>

namespace latad::io {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n\"");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n\"");
  return s.substr(first, last - first + 1);
}

template <typename T>
void load_values(std::istream& in, Matrix& m, bool fortran) {
  std::vector<T> buf(static_cast<std::size_t>(m.size()));
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(T)));
  if (!in) throw DataError("npy payload truncated");
  std::size_t k = 0;
  if (fortran) {
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = static_cast<double>(buf[k++]);
  } else {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = static_cast<double>(buf[k++]);
  }
}

}  // namespace

Matrix read_npy(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(fmt::format("cannot open {}", path.string()));
  std::array<char, 8> magic{};
  in.read(magic.data(), 8);
  if (!in || std::memcmp(magic.data(), "\x93NUMPY", 6) != 0) {
    throw DataError(fmt::format("{} is not an .npy file", path.string()));
  }
  const int major = static_cast<unsigned char>(magic[6]);
  std::uint32_t header_len = 0;
  if (major == 1) {
    std::uint16_t len16 = 0;
    in.read(reinterpret_cast<char*>(&len16), 2);
    header_len = len16;
  } else {
    in.read(reinterpret_cast<char*>(&header_len), 4);
  }
  std::string header(header_len, '\0');
  in.read(header.data(), header_len);
  if (!in) throw DataError(fmt::format("{}: truncated header", path.string()));

  std::smatch match;
  if (!std::regex_search(header, match, std::regex(R"('descr':\s*'([^']+)')"))) {
    throw DataError(fmt::format("{}: missing descr", path.string()));
  }
  const std::string descr = match[1];
  const bool fortran = header.find("'fortran_order': True") != std::string::npos;
  if (!std::regex_search(header, match, std::regex(R"('shape':\s*\(([^)]*)\))"))) {
    throw DataError(fmt::format("{}: missing shape", path.string()));
  }
  std::vector<Eigen::Index> shape;
  std::stringstream dims(match[1].str());
  for (std::string tok; std::getline(dims, tok, ',');) {
    tok = trim(tok);
    if (!tok.empty()) shape.push_back(std::stoll(tok));
  }
  if (shape.empty() || shape.size() > 2) throw DataError(fmt::format("{}: only 1-D/2-D arrays supported", path.string()));
  Matrix m(shape[0], shape.size() == 2 ? shape[1] : 1);

  if (descr == "<f8") load_values<double>(in, m, fortran);
  else if (descr == "<f4") load_values<float>(in, m, fortran);
  else if (descr == "<i8") load_values<std::int64_t>(in, m, fortran);
  else if (descr == "<i4") load_values<std::int32_t>(in, m, fortran);
  else if (descr == "|u1" || descr == "|b1") load_values<std::uint8_t>(in, m, fortran);
  else throw DataError(fmt::format("{}: unsupported dtype {}", path.string(), descr));
  return m;
}

void write_npy(const fs::path& path, const Matrix& m) {
  std::string header = fmt::format("{{'descr': '<f8', 'fortran_order': False, 'shape': ({}, {}), }}",
                                   m.rows(), m.cols());
  // Pad so that magic + length + header is a multiple of 64, ending in '\n'.
  const std::size_t total = 10 + header.size() + 1;
  header.append((64 - total % 64) % 64, ' ');
  header.push_back('\n');
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(fmt::format("cannot write {}", path.string()));
  out.write("\x93NUMPY\x01\x00", 8);
  const auto len = static_cast<std::uint16_t>(header.size());
  out.write(reinterpret_cast<const char*>(&len), 2);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      const double v = m(i, j);
      out.write(reinterpret_cast<const char*>(&v), sizeof(double));
    }
  }
  if (!out) throw DataError(fmt::format("failed writing {}", path.string()));
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') {
      quoted = !quoted;
    } else if (c == ',' && !quoted) {
      cells.push_back(trim(cell));
      cell.clear();
    } else {
      cell.push_back(c);
    }
  }
  cells.push_back(trim(cell));
  return cells;
}

double parse_number(const std::string& cell) {
  if (cell.empty()) return std::nan("");
  try {
    std::size_t used = 0;
    const double v = std::stod(cell, &used);
    return used == cell.size() ? v : std::nan("");
  } catch (const std::exception&) {
    return std::nan("");
  }
}

TimeSeriesDataset read_csv_dataset(const fs::path& path, SplitRole role) {
  std::ifstream in(path);
  if (!in) throw DataError(fmt::format("cannot open {}", path.string()));
  std::string line;
  if (!std::getline(in, line)) throw DataError(fmt::format("{} is empty", path.string()));
  const auto header = split_csv_line(line);
  if (header.size() < 2 || header.front() != "timestamp") {
    throw DataError(fmt::format("{}: header must start with 'timestamp'", path.string()));
  }
  const bool has_label = header.back() == "label";
  const std::size_t d = header.size() - 1 - (has_label ? 1 : 0);

  TimeSeriesDataset ds;
  ds.role = role;
  ds.feature_names.assign(header.begin() + 1, header.begin() + 1 + static_cast<std::ptrdiff_t>(d));
  std::vector<std::vector<double>> rows;
  Labels labels;
  std::size_t row_no = 1;
  while (std::getline(in, line)) {
    ++row_no;
    if (trim(line).empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw DataError(fmt::format("{}: row {} has {} cells, expected {}", path.string(), row_no, cells.size(),
                                  header.size()));
    }
    const double ts = parse_number(cells[0]);
    if (!std::isfinite(ts)) throw DataError(fmt::format("{}: row {} has a bad timestamp", path.string(), row_no));
    ds.timestamps.push_back(ts);
    std::vector<double> r(d);
    for (std::size_t j = 0; j < d; ++j) r[j] = parse_number(cells[j + 1]);
    rows.push_back(std::move(r));
    if (has_label) {
      const double l = parse_number(cells.back());
      if (l != 0.0 && l != 1.0) throw DataError(fmt::format("{}: row {} label is not 0/1", path.string(), row_no));
      labels.push_back(static_cast<std::uint8_t>(l));
    }
  }
  ds.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < d; ++j) ds.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  if (has_label) ds.labels = std::move(labels);
  ds.validate();
  return ds;
}

void write_csv_dataset(const fs::path& path, const TimeSeriesDataset& data) {
  std::ostringstream out;
  out << "timestamp";
  for (Eigen::Index j = 0; j < data.feature_count(); ++j) {
    out << ',' << (static_cast<std::size_t>(j) < data.feature_names.size() ? data.feature_names[static_cast<std::size_t>(j)]
                                                                             : fmt::format("f{}", j));
  }
  if (data.labels) out << ",label";
  out << '\n';
  for (Eigen::Index i = 0; i < data.length(); ++i) {
    out << fmt::format("{:.17g}", data.timestamps[static_cast<std::size_t>(i)]);
    for (Eigen::Index j = 0; j < data.feature_count(); ++j) out << fmt::format(",{:.17g}", data.values(i, j));
    if (data.labels) out << ',' << static_cast<int>((*data.labels)[static_cast<std::size_t>(i)]);
    out << '\n';
  }
  write_text_file_atomic(path, out.str());
}

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(fmt::format("cannot open {}", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file_atomic(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw DataError(fmt::format("cannot write {}", tmp.string()));
    out << content;
    if (!out) throw DataError(fmt::format("failed writing {}", tmp.string()));
  }
  fs::rename(tmp, path);
}

std::string sha256_hex(const std::string& bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  EVP_Digest(bytes.data(), bytes.size(), digest.data(), &len, EVP_sha256(), nullptr);
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

std::string sha256_file(const fs::path& path) { return sha256_hex(read_text_file(path)); }

}  // namespace latad::io
