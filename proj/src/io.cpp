#include "clvlab/io.hpp"

#include "clvlab/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <vector>

namespace clvlab::io {

namespace {

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  // Shortest representation that round-trips; never more than 17 digits.
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void write_series_csv(std::ostream& out, const TimeSeries& series) {
  out << "t";
  for (Index c = 0; c < series.dim(); ++c) out << ",x" << (c + 1);
  out << '\n';
  for (Index r = 0; r < series.length(); ++r) {
    out << format_double(series.time(r));
    for (Index c = 0; c < series.dim(); ++c) out << ',' << format_double(series.values(r, c));
    out << '\n';
  }
}

void write_series_csv(const std::filesystem::path& path, const TimeSeries& series) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open for writing: " + path.string());
  write_series_csv(out, series);
  if (!out) throw Error("write failed: " + path.string());
}

TimeSeries read_series_csv(std::istream& in, const CsvReadOptions& options) {
  std::string line;
  std::vector<std::vector<double>> rows;
  bool has_time = false;
  bool first_line = true;
  std::size_t width = 0;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    auto cells = split_csv(t);
    std::vector<double> row(cells.size());
    bool numeric = true;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (!parse_double(cells[i], row[i])) {
        numeric = false;
        break;
      }
    }
    if (first_line) {
      first_line = false;
      if (!numeric) {
        std::string name = cells.empty() ? std::string() : cells[0];
        std::transform(name.begin(), name.end(), name.begin(), ::tolower);
        has_time = (name == "t" || name == "time");
        width = cells.size();
        continue;
      }
    }
    if (!numeric) {
      throw ParameterError("csv: non-numeric value on line " + std::to_string(line_no));
    }
    if (width == 0) width = row.size();
    if (row.size() != width) {
      throw ShapeError("csv: line " + std::to_string(line_no) + " has " +
                       std::to_string(row.size()) + " fields, expected " + std::to_string(width));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ShapeError("csv: no data rows");
  if (has_time && width < 2) throw ShapeError("csv: time column without data columns");

  TimeSeries series;
  const std::size_t offset = has_time ? 1 : 0;
  series.values.resize(static_cast<Index>(rows.size()), static_cast<Index>(width - offset));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = offset; c < width; ++c) {
      series.values(static_cast<Index>(r), static_cast<Index>(c - offset)) = rows[r][c];
    }
  }
  series.dt = options.default_dt;
  if (has_time) {
    series.t0 = rows[0][0];
    if (rows.size() >= 2) {
      series.dt = rows[1][0] - rows[0][0];
      if (!(series.dt > 0.0)) throw ParameterError("csv: time column must be increasing");
      for (std::size_t r = 1; r < rows.size(); ++r) {
        const double expected = series.t0 + static_cast<double>(r) * series.dt;
        if (std::abs(rows[r][0] - expected) > 1e-6 * std::max(1.0, std::abs(expected))) {
          throw ParameterError("csv: non-uniform time axis at row " + std::to_string(r));
        }
      }
    }
  }
  return series;
}

TimeSeries read_series_csv(const std::filesystem::path& path, const CsvReadOptions& options) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open: " + path.string());
  return read_series_csv(in, options);
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string file_digest(const std::filesystem::path& path) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(read_file(path))));
  return buf;
}

}  // namespace clvlab::io
