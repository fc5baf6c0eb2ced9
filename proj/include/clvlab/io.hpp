#pragma once

#include "clvlab/timeseries.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>

namespace clvlab::io {

/// Shortest text that parses back to the identical double (at most 17
/// significant digits).
std::string format_double(double v);

/// Writes `t,x1,...,xd` followed by one row per sample.
void write_series_csv(std::ostream& out, const TimeSeries& series);
void write_series_csv(const std::filesystem::path& path, const TimeSeries& series);

struct CsvReadOptions {
  // Used when the file has no time column (or a single row).
  double default_dt = 1.0;
};

/// Reads a numeric CSV. A header row is optional; a first column named `t`
/// (or `time`) is treated as the time axis and dt is taken from its first
/// two entries. Non-uniform time axes are rejected.
TimeSeries read_series_csv(const std::filesystem::path& path,
                           const CsvReadOptions& options = {});
TimeSeries read_series_csv(std::istream& in, const CsvReadOptions& options = {});

/// FNV-1a 64-bit digest of a byte string / file, rendered as 16 hex digits.
std::uint64_t fnv1a64(std::string_view bytes);
std::string file_digest(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);

}  // namespace clvlab::io
