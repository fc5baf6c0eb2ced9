#pragma once

#include "clvlab/embedding.hpp"
#include "clvlab/timeseries.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace clvlab::pipeline {

inline constexpr int kConfigFormatVersion = 1;
inline constexpr int kManifestFormatVersion = 1;

// Raised for anything that is wrong with the recipe itself (schema, ranges,
// missing upstream artifacts). Maps to exit status 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct InputConfig {
  // Builtin model; empty when reading a CSV.
  std::string model;
  std::map<std::string, double> params;
  std::vector<double> x0;  // empty: model default
  double dt = 0.0;
  long steps = 0;
  long discard = 0;

  std::filesystem::path csv;  // resolved against the config file directory
  long column = -1;           // 0-based data column to keep; -1 keeps all
  double csv_dt = 1.0;        // used when the CSV has no time column

  bool builtin() const { return !model.empty(); }
};

struct FembvConfig {
  int K = 2;
  int m = 1;
  double p = 0.0;  // 0 selects p from the L-curve
  std::vector<double> p_grid;
  int restarts = 10;
  int max_iterations = 100;
};

struct ClvConfig {
  long N = 10;
  long M = 10;
  long n = 3;
  // [begin, end) in cocycle steps; unset means the full valid coverage.
  std::optional<std::size_t> begin;
  std::optional<std::size_t> end;
  std::size_t stride = 1;
  std::vector<std::string> cocycles;  // "analytic" and/or "var"
};

struct DiagnosticsConfig {
  int i = 1;  // 1-based CLV pair for theta
  int j = 2;
  std::string states = "none";  // none | sign | labels
  long exclude_window = 10;
  bool flow = false;
  std::string neutral = "second";  // second | smallest_ftle
};

struct GridConfig {
  std::vector<long> N;
  std::vector<long> n;
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t stride = 10;
  std::string cocycle = "var";
};

struct ExperimentConfig {
  int format_version = kConfigFormatVersion;
  std::string name;
  std::uint64_t seed = 0;
  std::filesystem::path output_dir;
  InputConfig input;
  std::optional<EmbeddingSpec> embedding;
  std::optional<FembvConfig> fembv;
  std::optional<ClvConfig> clv;
  DiagnosticsConfig diagnostics;
  std::optional<GridConfig> grid;
};

/// Parses and schema-checks a TOML recipe. Relative paths resolve against
/// `base_dir`. Throws ConfigError.
ExperimentConfig parse_config(const std::string& toml_text, const std::filesystem::path& base_dir);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Range checks that need no data. Throws ConfigError.
void validate(const ExperimentConfig& config);

enum class Stage { simulate, embed, fit, lcurve, clv, angles, gridsearch, run };

struct RunOptions {
  bool dump_vectors = false;
};

struct RunResult {
  int exit_code = 0;
  std::string stage;    // failing stage, empty on success
  std::string message;  // error text, empty on success
  std::vector<std::string> files;
  std::vector<std::string> warnings;
};

/// Executes `stage` (or every configured stage for Stage::run), writing
/// artifacts and manifest.json under config.output_dir. Never throws for
/// pipeline failures: exit 2 = configuration, 3 = numerical, 1 = I/O.
RunResult execute(const ExperimentConfig& config, Stage stage, const RunOptions& options = {});

}  // namespace clvlab::pipeline
