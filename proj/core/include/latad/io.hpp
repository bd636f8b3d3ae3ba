#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "latad/common.hpp"
#include "latad/preprocessing.hpp"

namespace latad::io {

/// Reads a 1-D or 2-D C-order .npy array of float64, float32, int64, int32,
/// uint8 or bool. 1-D arrays load as a single column.
Matrix read_npy(const std::filesystem::path& path);
/// Writes a float64 C-order 2-D array.
void write_npy(const std::filesystem::path& path, const Matrix& m);

/// CSV with header "timestamp,<feature...>[,label]". Empty or non-numeric
/// cells load as NaN so fill_missing can repair them.
TimeSeriesDataset read_csv_dataset(const std::filesystem::path& path, SplitRole role);
void write_csv_dataset(const std::filesystem::path& path, const TimeSeriesDataset& data);

/// Splits one CSV line on commas outside double quotes, trimming whitespace.
std::vector<std::string> split_csv_line(const std::string& line);
/// Parses a number; returns NaN for empty or malformed cells.
double parse_number(const std::string& cell);

std::string read_text_file(const std::filesystem::path& path);
/// Writes via a temporary file and rename, so readers never see a partial file.
void write_text_file_atomic(const std::filesystem::path& path, const std::string& content);

/// Hex SHA-256 of a byte string / file.
std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace latad::io
