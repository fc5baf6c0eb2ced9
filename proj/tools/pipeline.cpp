#include "pipeline.hpp"

#include "clvlab/analysis.hpp"
#include "clvlab/clv.hpp"
#include "clvlab/cocycle.hpp"
#include "clvlab/dynsys.hpp"
#include "clvlab/error.hpp"
#include "clvlab/fembv.hpp"
#include "clvlab/io.hpp"
#include "clvlab/report.hpp"

#include "json.hpp"
#include "toml.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace clvlab::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// TOML schema helpers

void check_keys(const toml::table& t, const std::string& where, std::set<std::string> allowed) {
  for (const auto& [key, node] : t) {
    if (!allowed.count(std::string(key.str()))) {
      throw ConfigError(where + ": unknown key '" + std::string(key.str()) + "'");
    }
  }
}

template <typename T>
std::optional<T> opt(const toml::table& t, const std::string& where, const char* key) {
  const toml::node* node = t.get(key);
  if (!node) return std::nullopt;
  auto v = node->value<T>();
  if (!v) throw ConfigError(where + "." + key + ": wrong type");
  return *v;
}

template <typename T>
T req(const toml::table& t, const std::string& where, const char* key) {
  auto v = opt<T>(t, where, key);
  if (!v) throw ConfigError(where + "." + key + ": required");
  return *v;
}

template <typename T>
std::optional<std::vector<T>> opt_array(const toml::table& t, const std::string& where, const char* key) {
  const toml::node* node = t.get(key);
  if (!node) return std::nullopt;
  const auto* arr = node->as_array();
  if (!arr) throw ConfigError(where + "." + key + ": expected an array");
  std::vector<T> out;
  for (const auto& item : *arr) {
    auto v = item.value<T>();
    if (!v) throw ConfigError(where + "." + key + ": wrong element type");
    out.push_back(*v);
  }
  return out;
}

const toml::table* subtable(const toml::table& t, const char* key) {
  const toml::node* node = t.get(key);
  if (!node) return nullptr;
  if (!node->is_table()) throw ConfigError(std::string(key) + ": expected a table");
  return node->as_table();
}

struct Range3 {
  std::size_t begin, end, stride;
};

std::optional<Range3> opt_range(const toml::table& t, const std::string& where) {
  auto r = opt_array<std::int64_t>(t, where, "t_range");
  if (!r) return std::nullopt;
  if (r->size() != 2 && r->size() != 3) throw ConfigError(where + ".t_range: expected [begin, end] or [begin, end, stride]");
  for (auto v : *r)
    if (v < 0) throw ConfigError(where + ".t_range: negative entry");
  Range3 out{static_cast<std::size_t>((*r)[0]), static_cast<std::size_t>((*r)[1]), 1};
  if (r->size() == 3) out.stride = static_cast<std::size_t>((*r)[2]);
  return out;
}

// ---------------------------------------------------------------------------

const std::set<std::string> kNumericalErrors = {"IntegrationError",       "ConditioningError",
                                                "DegeneracyError",        "NoIntersectionError",
                                                "InsufficientDataError",  "DegenerateClusteringError"};

std::string error_kind(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return "ConfigError";
  if (dynamic_cast<const ParameterError*>(&e)) return "ParameterError";
  if (dynamic_cast<const ShapeError*>(&e)) return "ShapeError";
  if (dynamic_cast<const RangeError*>(&e)) return "RangeError";
  if (dynamic_cast<const IntegrationError*>(&e)) return "IntegrationError";
  if (dynamic_cast<const ConditioningError*>(&e)) return "ConditioningError";
  if (dynamic_cast<const DegeneracyError*>(&e)) return "DegeneracyError";
  if (dynamic_cast<const NoIntersectionError*>(&e)) return "NoIntersectionError";
  if (dynamic_cast<const InsufficientDataError*>(&e)) return "InsufficientDataError";
  if (dynamic_cast<const DegenerateClusteringError*>(&e)) return "DegenerateClusteringError";
  return "Error";
}

int exit_code_for(const std::string& kind) {
  if (kind == "ConfigError" || kind == "ParameterError" || kind == "ShapeError" || kind == "RangeError") return 2;
  if (kNumericalErrors.count(kind)) return 3;
  return 1;
}

std::string stage_name(Stage s) {
  switch (s) {
    case Stage::simulate: return "simulate";
    case Stage::embed: return "embed";
    case Stage::fit: return "fit";
    case Stage::lcurve: return "lcurve";
    case Stage::clv: return "clv";
    case Stage::angles: return "angles";
    case Stage::gridsearch: return "gridsearch";
    case Stage::run: return "run";
  }
  return "?";
}

json config_to_json(const ExperimentConfig& c) {
  json j;
  j["format_version"] = c.format_version;
  j["name"] = c.name;
  j["seed"] = c.seed;
  json in;
  if (c.input.builtin()) {
    in = {{"model", c.input.model}, {"params", c.input.params}, {"dt", c.input.dt},
          {"steps", c.input.steps}, {"discard", c.input.discard}, {"x0", c.input.x0}};
  } else {
    in = {{"csv", c.input.csv.generic_string()}, {"dt", c.input.csv_dt}};
  }
  in["column"] = c.input.column;
  j["input"] = in;
  if (c.embedding) j["embedding"] = {{"delay", c.embedding->delay}, {"dim", c.embedding->dim}};
  if (c.fembv) {
    j["fembv"] = {{"K", c.fembv->K}, {"m", c.fembv->m}, {"p", c.fembv->p}, {"p_grid", c.fembv->p_grid},
                  {"restarts", c.fembv->restarts}, {"max_iterations", c.fembv->max_iterations}};
  }
  if (c.clv) {
    j["clv"] = {{"N", c.clv->N}, {"M", c.clv->M}, {"n", c.clv->n}, {"stride", c.clv->stride},
                {"cocycles", c.clv->cocycles}};
    if (c.clv->begin) j["clv"]["t_range"] = {*c.clv->begin, *c.clv->end};
  }
  const auto& d = c.diagnostics;
  j["diagnostics"] = {{"pair", {d.i, d.j}}, {"states", d.states}, {"exclude_window", d.exclude_window},
                      {"flow", d.flow}, {"neutral", d.neutral}};
  if (c.grid) {
    j["gridsearch"] = {{"N", c.grid->N}, {"n", c.grid->n}, {"t_range", {c.grid->begin, c.grid->end, c.grid->stride}},
                       {"cocycle", c.grid->cocycle}};
  }
  return j;
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

ExperimentConfig parse_config(const std::string& toml_text, const fs::path& base_dir) {
  toml::table root;
  try {
    root = toml::parse(toml_text);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << "TOML parse error at line " << e.source().begin.line << ": " << e.description();
    throw ConfigError(msg.str());
  }
  check_keys(root, "config",
             {"format_version", "name", "seed", "output_dir", "input", "embedding", "fembv", "clv",
              "diagnostics", "gridsearch"});
  ExperimentConfig c;
  c.format_version = static_cast<int>(req<std::int64_t>(root, "config", "format_version"));
  c.name = opt<std::string>(root, "config", "name").value_or("experiment");
  const auto seed = opt<std::int64_t>(root, "config", "seed").value_or(0);
  if (seed < 0) throw ConfigError("config.seed: must be non-negative");
  c.seed = static_cast<std::uint64_t>(seed);
  if (auto out = opt<std::string>(root, "config", "output_dir")) c.output_dir = *out;

  const toml::table* in = subtable(root, "input");
  if (!in) throw ConfigError("input: required table");
  check_keys(*in, "input", {"model", "params", "x0", "dt", "steps", "discard", "csv", "column"});
  const auto model = opt<std::string>(*in, "input", "model");
  const auto csv = opt<std::string>(*in, "input", "csv");
  if (model.has_value() == csv.has_value()) throw ConfigError("input: exactly one of 'model' or 'csv' is required");
  c.input.column = opt<std::int64_t>(*in, "input", "column").value_or(-1);
  if (model) {
    c.input.model = *model;
    if (const toml::table* params = subtable(*in, "params")) {
      for (const auto& [key, node] : *params) {
        auto v = node.value<double>();
        if (!v) throw ConfigError("input.params." + std::string(key.str()) + ": expected a number");
        c.input.params[std::string(key.str())] = *v;
      }
    }
    SimulationDefaults def;
    try {
      def = default_simulation(c.input.model);
    } catch (const Error& e) {
      throw ConfigError(std::string("input.model: ") + e.what());
    }
    c.input.dt = opt<double>(*in, "input", "dt").value_or(def.dt);
    c.input.steps = opt<std::int64_t>(*in, "input", "steps").value_or(def.steps);
    c.input.discard = opt<std::int64_t>(*in, "input", "discard").value_or(def.discard);
    c.input.x0 = opt_array<double>(*in, "input", "x0").value_or(
        std::vector<double>(def.x0.data(), def.x0.data() + def.x0.size()));
  } else {
    for (const char* k : {"params", "x0", "steps", "discard"}) {
      if (in->contains(k)) throw ConfigError(std::string("input.") + k + ": only valid with a builtin model");
    }
    fs::path p = *csv;
    c.input.csv = p.is_absolute() ? p : base_dir / p;
    c.input.csv_dt = opt<double>(*in, "input", "dt").value_or(1.0);
  }

  if (const toml::table* e = subtable(root, "embedding")) {
    check_keys(*e, "embedding", {"delay", "dim"});
    EmbeddingSpec spec;
    spec.delay = req<std::int64_t>(*e, "embedding", "delay");
    spec.dim = req<std::int64_t>(*e, "embedding", "dim");
    c.embedding = spec;
  }

  if (const toml::table* f = subtable(root, "fembv")) {
    check_keys(*f, "fembv", {"K", "m", "p", "p_grid", "restarts", "max_iterations"});
    FembvConfig fc;
    fc.K = static_cast<int>(req<std::int64_t>(*f, "fembv", "K"));
    fc.m = static_cast<int>(req<std::int64_t>(*f, "fembv", "m"));
    fc.p = opt<double>(*f, "fembv", "p").value_or(0.0);
    fc.p_grid = opt_array<double>(*f, "fembv", "p_grid").value_or(std::vector<double>{});
    fc.restarts = static_cast<int>(opt<std::int64_t>(*f, "fembv", "restarts").value_or(10));
    fc.max_iterations = static_cast<int>(opt<std::int64_t>(*f, "fembv", "max_iterations").value_or(100));
    if (!f->contains("p") && fc.p_grid.empty()) throw ConfigError("fembv: one of 'p' or 'p_grid' is required");
    if (f->contains("p") && !(fc.p > 0.0)) throw ConfigError("fembv.p: must be positive");
    c.fembv = fc;
  }

  if (const toml::table* v = subtable(root, "clv")) {
    check_keys(*v, "clv", {"N", "M", "n", "t_range", "stride", "cocycles"});
    ClvConfig cc;
    cc.N = req<std::int64_t>(*v, "clv", "N");
    cc.M = opt<std::int64_t>(*v, "clv", "M").value_or(cc.N);
    cc.n = req<std::int64_t>(*v, "clv", "n");
    const auto stride = opt<std::int64_t>(*v, "clv", "stride").value_or(1);
    if (stride < 1) throw ConfigError("clv.stride: must be >= 1");
    cc.stride = static_cast<std::size_t>(stride);
    if (auto r = opt_range(*v, "clv")) {
      cc.begin = r->begin;
      cc.end = r->end;
      if (v->get("t_range")->as_array()->size() == 3) cc.stride = r->stride;
    }
    cc.cocycles = opt_array<std::string>(*v, "clv", "cocycles")
                      .value_or(std::vector<std::string>{c.fembv ? "var" : "analytic"});
    c.clv = cc;
  }

  if (const toml::table* d = subtable(root, "diagnostics")) {
    check_keys(*d, "diagnostics", {"pair", "states", "exclude_window", "flow", "neutral"});
    if (auto pair = opt_array<std::int64_t>(*d, "diagnostics", "pair")) {
      if (pair->size() != 2) throw ConfigError("diagnostics.pair: expected two 1-based indices");
      c.diagnostics.i = static_cast<int>((*pair)[0]);
      c.diagnostics.j = static_cast<int>((*pair)[1]);
    }
    c.diagnostics.states = opt<std::string>(*d, "diagnostics", "states").value_or("none");
    c.diagnostics.exclude_window = opt<std::int64_t>(*d, "diagnostics", "exclude_window").value_or(10);
    c.diagnostics.flow = opt<bool>(*d, "diagnostics", "flow").value_or(false);
    c.diagnostics.neutral = opt<std::string>(*d, "diagnostics", "neutral").value_or("second");
  }

  if (const toml::table* g = subtable(root, "gridsearch")) {
    check_keys(*g, "gridsearch", {"N", "n", "t_range", "cocycle"});
    GridConfig gc;
    auto Ns = opt_array<std::int64_t>(*g, "gridsearch", "N");
    auto ns = opt_array<std::int64_t>(*g, "gridsearch", "n");
    if (!Ns || !ns) throw ConfigError("gridsearch: 'N' and 'n' are required");
    gc.N.assign(Ns->begin(), Ns->end());
    gc.n.assign(ns->begin(), ns->end());
    auto r = opt_range(*g, "gridsearch");
    if (!r) throw ConfigError("gridsearch.t_range: required");
    gc.begin = r->begin;
    gc.end = r->end;
    gc.stride = g->get("t_range")->as_array()->size() == 3 ? r->stride : 10;
    gc.cocycle = opt<std::string>(*g, "gridsearch", "cocycle").value_or(c.fembv ? "var" : "analytic");
    c.grid = gc;
  }
  return c;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str(), path.parent_path());
}

void validate(const ExperimentConfig& c) {
  if (c.format_version != kConfigFormatVersion) {
    throw ConfigError("format_version " + std::to_string(c.format_version) + " is not supported (expected " +
                      std::to_string(kConfigFormatVersion) + ")");
  }
  if (c.output_dir.empty()) throw ConfigError("output_dir: not set (use the config key or --output)");
  const auto& in = c.input;
  if (in.builtin()) {
    OdeModel model;
    try {
      model = make_model(in.model, in.params);
    } catch (const Error& e) {
      throw ConfigError(std::string("input: ") + e.what());
    }
    if (!(in.dt > 0.0)) throw ConfigError("input.dt: must be positive");
    if (in.steps < 2) throw ConfigError("input.steps: must be >= 2");
    if (in.discard < 0) throw ConfigError("input.discard: must be >= 0");
    if (static_cast<int>(in.x0.size()) != model.dim) {
      throw ConfigError("input.x0: expected " + std::to_string(model.dim) + " entries");
    }
    if (in.column >= model.dim) throw ConfigError("input.column: out of range for model " + in.model);
  } else {
    if (!(in.csv_dt > 0.0)) throw ConfigError("input.dt: must be positive");
    if (!fs::exists(in.csv)) throw ConfigError("input.csv: file not found: " + in.csv.string());
  }
  if (in.column < -1) throw ConfigError("input.column: must be >= 0");

  if (c.embedding) {
    if (c.embedding->delay < 1) throw ConfigError("embedding.delay: must be >= 1");
    if (c.embedding->dim < 1) throw ConfigError("embedding.dim: must be >= 1");
    if (in.builtin() && in.column < 0) throw ConfigError("embedding: requires input.column for a builtin model");
  }
  if (c.fembv) {
    const auto& f = *c.fembv;
    if (f.K < 1) throw ConfigError("fembv.K: must be >= 1");
    if (f.m < 1) throw ConfigError("fembv.m: must be >= 1");
    if (f.restarts < 1) throw ConfigError("fembv.restarts: must be >= 1");
    if (f.max_iterations < 1) throw ConfigError("fembv.max_iterations: must be >= 1");
    for (double p : f.p_grid)
      if (!(p > 0.0)) throw ConfigError("fembv.p_grid: entries must be positive");
    if (!f.p_grid.empty()) {
      std::set<double> distinct(f.p_grid.begin(), f.p_grid.end());
      if (distinct.size() < 4) throw ConfigError("fembv.p_grid: needs at least 4 distinct values");
    }
  }
  auto check_cocycle = [&](const std::string& kind, const std::string& where) {
    if (kind == "analytic") {
      if (!in.builtin()) throw ConfigError(where + ": 'analytic' needs a builtin model");
    } else if (kind == "var") {
      if (!c.fembv) throw ConfigError(where + ": 'var' needs a [fembv] table");
    } else {
      throw ConfigError(where + ": unknown cocycle '" + kind + "' (expected analytic or var)");
    }
  };
  if (c.clv) {
    const auto& v = *c.clv;
    if (v.N < 1 || v.M < 1) throw ConfigError("clv: N and M must be >= 1");
    if (v.n < 0) throw ConfigError("clv.n: must be >= 0");
    if (v.begin && !(*v.begin < *v.end)) throw ConfigError("clv.t_range: empty range");
    if (v.stride < 1) throw ConfigError("clv.t_range: stride must be >= 1");
    if (v.cocycles.empty()) throw ConfigError("clv.cocycles: empty list");
    std::set<std::string> seen;
    for (const auto& k : v.cocycles) {
      check_cocycle(k, "clv.cocycles");
      if (!seen.insert(k).second) throw ConfigError("clv.cocycles: duplicate '" + k + "'");
    }
  }
  const auto& d = c.diagnostics;
  if (d.i < 1 || d.j < 1 || d.i == d.j) throw ConfigError("diagnostics.pair: need two distinct indices >= 1");
  if (d.states != "none" && d.states != "sign" && d.states != "labels") {
    throw ConfigError("diagnostics.states: expected none, sign or labels");
  }
  if (d.states == "labels" && !c.fembv) throw ConfigError("diagnostics.states: 'labels' needs a [fembv] table");
  if (d.exclude_window < 0) throw ConfigError("diagnostics.exclude_window: must be >= 0");
  if (d.neutral != "second" && d.neutral != "smallest_ftle") {
    throw ConfigError("diagnostics.neutral: expected second or smallest_ftle");
  }
  if (c.grid) {
    const auto& g = *c.grid;
    if (g.N.empty() || g.n.empty()) throw ConfigError("gridsearch: empty N or n list");
    for (long v : g.N)
      if (v < 1) throw ConfigError("gridsearch.N: entries must be >= 1");
    for (long v : g.n)
      if (v < 0) throw ConfigError("gridsearch.n: entries must be >= 0");
    if (!(g.begin < g.end)) throw ConfigError("gridsearch.t_range: empty range");
    if (g.stride < 1) throw ConfigError("gridsearch.t_range: stride must be >= 1");
    check_cocycle(g.cocycle, "gridsearch.cocycle");
  }
}

// ---------------------------------------------------------------------------
// Runner

namespace {

struct FileEntry {
  std::string schema;
  std::string digest;
  std::uintmax_t bytes = 0;
};

class Runner {
 public:
  Runner(const ExperimentConfig& config, const RunOptions& options)
      : c_(config), opt_(options), dir_(config.output_dir) {}

  void simulate();
  void embed();
  void lcurve();
  void fit();
  void clv();
  void angles();
  void gridsearch();

  const std::map<std::string, FileEntry>& files() const { return files_; }
  const std::vector<std::string>& warnings() const { return warnings_; }
  std::string stage;

 private:
  const TimeSeries& raw();
  const TimeSeries& observed();
  const FittedModel& model();
  OdeModel ode() const { return make_model(c_.input.model, c_.input.params); }
  CocycleSource source(const std::string& kind);
  std::vector<int> states_for(const std::string& kind);
  int neutral_column(const std::vector<ClvResult>& clvs) const;
  AlignmentSeries load_alignment(const std::string& kind);

  void emit(const std::string& rel, const std::string& schema, const std::string& content);
  void record(const std::string& rel, const std::string& schema);
  void warn(std::string msg) {
    spdlog::warn("{}", msg);
    warnings_.push_back(std::move(msg));
  }
  fs::path require(const std::string& rel, const std::string& producer) const {
    const fs::path p = dir_ / rel;
    if (!fs::exists(p)) throw ConfigError(rel + " not found in " + dir_.string() + "; run '" + producer + "' first");
    return p;
  }

  const ExperimentConfig& c_;
  RunOptions opt_;
  fs::path dir_;
  std::optional<TimeSeries> raw_;
  std::optional<TimeSeries> observed_;
  std::optional<FittedModel> model_;
  std::optional<double> p_star_;
  std::map<std::string, std::vector<ClvResult>> clvs_;
  std::map<std::string, FileEntry> files_;
  std::vector<std::string> warnings_;
};

void Runner::emit(const std::string& rel, const std::string& schema, const std::string& content) {
  const fs::path p = dir_ / rel;
  fs::create_directories(p.parent_path());
  report::write_text(p, content);
  record(rel, schema);
}

void Runner::record(const std::string& rel, const std::string& schema) {
  const fs::path p = dir_ / rel;
  files_[rel] = {schema, io::file_digest(p), fs::file_size(p)};
  spdlog::debug("wrote {}", p.string());
}

const TimeSeries& Runner::raw() {
  if (!raw_) raw_ = io::read_series_csv(require("series.csv", "simulate"));
  return *raw_;
}

const TimeSeries& Runner::observed() {
  if (observed_) return *observed_;
  if (c_.embedding) {
    observed_ = io::read_series_csv(require("embedded.csv", "embed"));
  } else if (c_.input.column >= 0) {
    if (c_.input.column >= raw().dim()) throw ConfigError("input.column: out of range for the input data");
    observed_ = raw().column(c_.input.column);
  } else {
    observed_ = raw();
  }
  return *observed_;
}

const FittedModel& Runner::model() {
  if (!model_) model_ = fitted_model_from_json(io::read_file(require("model.json", "fit")));
  return *model_;
}

CocycleSource Runner::source(const std::string& kind) {
  if (kind == "analytic") return analytic_cocycle(ode(), raw(), Execution::parallel);
  return var_cocycle(model(), observed());
}

std::vector<int> Runner::states_for(const std::string& kind) {
  const auto& mode = c_.diagnostics.states;
  if (mode == "none") return {};
  const TimeSeries& base = kind == "analytic" ? raw() : observed();
  std::vector<int> out(static_cast<std::size_t>(base.length()), -1);
  if (mode == "sign") {
    for (Index t = 0; t < base.length(); ++t) out[t] = base.values(t, 0) < 0.0 ? Wing::left : Wing::right;
  } else {
    // Fit labels live on the observed index, which matches the raw index
    // up to the samples lost to the embedding.
    const auto& labels = model().labels();
    for (std::size_t t = 0; t < out.size() && t < labels.size(); ++t) out[t] = labels[t];
  }
  return out;
}

int Runner::neutral_column(const std::vector<ClvResult>& clvs) const {
  if (c_.diagnostics.neutral == "second") return 1;
  Vec sum;
  std::size_t count = 0;
  for (const auto& r : clvs) {
    if (!r.ok) continue;
    sum = count == 0 ? r.ftle : Vec(sum + r.ftle);
    ++count;
  }
  if (count == 0) throw InsufficientDataError("no valid CLV point to pick the near-neutral column");
  Index best = 0;
  sum.cwiseAbs().minCoeff(&best);
  return static_cast<int>(best);
}

void Runner::simulate() {
  stage = "simulate";
  TimeSeries ts;
  if (c_.input.builtin()) {
    const auto m = ode();
    const Vec x0 = Eigen::Map<const Vec>(c_.input.x0.data(), static_cast<Index>(c_.input.x0.size()));
    spdlog::info("simulating {} for {} steps (dt={}, discard={})", m.name, c_.input.steps, c_.input.dt,
                 c_.input.discard);
    ts = clvlab::simulate(m, x0, c_.input.dt, c_.input.steps, c_.input.discard);
  } else {
    spdlog::info("reading {}", c_.input.csv.string());
    ts = io::read_series_csv(c_.input.csv, {c_.input.csv_dt});
    if (c_.input.column >= ts.dim()) throw ConfigError("input.column: out of range for " + c_.input.csv.string());
  }
  std::ostringstream out;
  io::write_series_csv(out, ts);
  emit("series.csv", "series-csv/1", out.str());
  raw_ = std::move(ts);
  observed_.reset();
}

void Runner::embed() {
  stage = "embed";
  if (!c_.embedding) throw ConfigError("embed: no [embedding] table in the config");
  TimeSeries base = raw();
  if (c_.input.column >= 0) {
    if (c_.input.column >= base.dim()) throw ConfigError("input.column: out of range for the input data");
    base = base.column(c_.input.column);
  }
  auto emb = delay_embed(base, *c_.embedding);
  spdlog::info("embedded {} samples into {} x {}", base.length(), emb.length(), emb.dim());
  std::ostringstream out;
  io::write_series_csv(out, emb);
  emit("embedded.csv", "series-csv/1", out.str());
  observed_ = std::move(emb);
}

FemBvOptions base_options(const ExperimentConfig& c) {
  FemBvOptions o;
  o.K = c.fembv->K;
  o.m = c.fembv->m;
  o.p = c.fembv->p;
  o.restarts = c.fembv->restarts;
  o.max_iterations = c.fembv->max_iterations;
  o.seed = c.seed;
  o.execution = Execution::parallel;
  return o;
}

void Runner::lcurve() {
  stage = "lcurve";
  if (!c_.fembv || c_.fembv->p_grid.empty()) throw ConfigError("lcurve: fembv.p_grid is not set");
  spdlog::info("L-curve over {} values of p", c_.fembv->p_grid.size());
  const auto curve = lcurve_select_p(observed(), base_options(c_), c_.fembv->p_grid);
  for (const auto& w : curve.warnings) warn("lcurve: " + w);
  std::ostringstream out;
  report::write_lcurve_csv(out, curve);
  emit("lcurve.csv", "lcurve-csv/1", out.str());
  p_star_ = curve.p_star;
  spdlog::info("L-curve selected p = {}", curve.p_star);
}

void Runner::fit() {
  stage = "fit";
  if (!c_.fembv) throw ConfigError("fit: no [fembv] table in the config");
  FemBvOptions o = base_options(c_);
  if (!(o.p > 0.0)) {
    if (!p_star_) {
      // Pick up the selection of an earlier 'lcurve' invocation.
      std::ifstream in(require("lcurve.csv", "lcurve"));
      std::string line;
      std::getline(in, line);
      while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '1') p_star_ = std::stod(line.substr(0, line.find(',')));
      }
      if (!p_star_) throw ConfigError("lcurve.csv has no selected row");
    }
    o.p = *p_star_;
  }
  spdlog::info("fitting FEM-BV-VAR K={} m={} p={} with {} restarts", o.K, o.m, o.p, o.restarts);
  auto fitted = fit_fembv(observed(), o);
  spdlog::info("final loss {} with {} switches (budget {})", fitted.final_loss(), fitted.affiliation.switches(),
               fitted.hyper.C);
  const auto stab = stability_report(fitted);
  for (std::size_t k = 0; k < stab.divergent.size(); ++k) {
    if (stab.divergent[k]) {
      warn("fit: cluster " + std::to_string(k) + " has spectral radius " + io::format_double(stab.spectral_radius[k]));
    }
  }
  emit("model.json", "fembv-model-json/1", fitted_model_to_json(fitted));
  std::ostringstream rec;
  io::write_series_csv(rec, reconstruct(observed(), fitted));
  emit("reconstruction.csv", "series-csv/1", rec.str());
  if (opt_.dump_vectors) emit("companion.json", "companion-json/1", companion_matrices_to_json(fitted));
  model_ = std::move(fitted);
}

void Runner::clv() {
  stage = "clv";
  if (!c_.clv) throw ConfigError("clv: no [clv] table in the config");
  const auto& v = *c_.clv;
  const ClvParams params{v.N, v.M, v.n};
  for (const auto& kind : v.cocycles) {
    stage = "clv(" + kind + ")";
    const auto src = source(kind);
    TimeRange range = clv_coverage(src, params);
    if (v.begin) range = {*v.begin, *v.end, v.stride};
    range.stride = v.stride;
    spdlog::info("CLVs on the {} cocycle for t in [{}, {}) step {}", kind, range.begin, range.end, range.stride);
    auto clvs = clv_series(src, range, params, Execution::parallel);
    std::size_t failed = 0;
    for (const auto& r : clvs) failed += !r.ok;
    if (failed == clvs.size()) throw DegeneracyError("every CLV point failed; first error: " + clvs.front().error);
    if (failed > 0) warn("clv(" + kind + "): " + std::to_string(failed) + " of " + std::to_string(clvs.size()) + " points failed");
    std::ostringstream out;
    report::write_clv_csv(out, clvs);
    emit("clv_" + kind + ".csv", "clv-csv/1", out.str());
    if (opt_.dump_vectors) {
      std::ostringstream vec;
      report::write_clv_vectors_json(vec, clvs);
      emit("clv_" + kind + "_vectors.json", "clv-vectors-json/1", vec.str());
    }
    clvs_[kind] = std::move(clvs);
  }
}

std::vector<ClvResult> read_clv_vectors(const fs::path& path) {
  const auto doc = json::parse(io::read_file(path));
  std::vector<ClvResult> out;
  for (const auto& item : doc) {
    ClvResult r;
    r.t = item.at("t").get<std::size_t>();
    r.ok = item.at("ok").get<bool>();
    if (r.ok) {
      const auto cols = item.at("vectors").get<std::vector<std::vector<double>>>();
      const auto ftle = item.at("ftle").get<std::vector<double>>();
      const auto d = static_cast<Index>(cols.size());
      r.vectors.resize(d, d);
      for (Index j = 0; j < d; ++j)
        for (Index i = 0; i < d; ++i) r.vectors(i, j) = cols[j][i];
      r.ftle = Eigen::Map<const Vec>(ftle.data(), d);
    } else {
      r.error = item.value("error", "");
    }
    out.push_back(std::move(r));
  }
  return out;
}

// theta for one pair straight from a CLV CSV written by an earlier run.
AlignmentSeries Runner::load_alignment(const std::string& kind) {
  std::ifstream in(require("clv_" + kind + ".csv", "clv"));
  std::string line;
  std::getline(in, line);
  std::vector<std::string> header;
  std::stringstream hs(line);
  for (std::string cell; std::getline(hs, cell, ',');) header.push_back(cell);
  const std::string want = "theta_" + std::to_string(c_.diagnostics.i) + std::to_string(c_.diagnostics.j);
  const std::string alt = "theta_" + std::to_string(c_.diagnostics.j) + std::to_string(c_.diagnostics.i);
  const auto col = std::find_if(header.begin(), header.end(), [&](const auto& h) { return h == want || h == alt; });
  if (col == header.end()) throw ConfigError("clv_" + kind + ".csv has no column " + want);
  const auto idx = static_cast<std::size_t>(col - header.begin());
  AlignmentSeries s;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) cells.push_back(cell);
    if (cells.size() != header.size()) throw ShapeError("clv_" + kind + ".csv: ragged row");
    s.t.push_back(std::stoul(cells[0]));
    s.theta.push_back(cells.back() == "1" ? std::stod(cells[idx]) : std::numeric_limits<double>::quiet_NaN());
  }
  s.state.assign(s.t.size(), -1);
  return s;
}

void Runner::angles() {
  stage = "angles";
  if (!c_.clv) throw ConfigError("angles: no [clv] table in the config");
  const auto& d = c_.diagnostics;
  json diag = json::object();
  for (const auto& kind : c_.clv->cocycles) {
    stage = "angles(" + kind + ")";
    const std::string vec_file = "clv_" + kind + "_vectors.json";
    if (!clvs_.count(kind) && fs::exists(dir_ / vec_file)) clvs_[kind] = read_clv_vectors(dir_ / vec_file);
    const bool have_vectors = clvs_.count(kind) > 0;
    if (have_vectors && clvs_[kind].front().vectors.size() > 0 &&
        std::max(d.i, d.j) > clvs_[kind].front().vectors.cols()) {
      throw ConfigError("diagnostics.pair: index exceeds the cocycle dimension");
    }
    AlignmentSeries s = have_vectors ? alignment_series(clvs_[kind], d.i - 1, d.j - 1) : load_alignment(kind);
    json entry = {{"pair", {d.i, d.j}}, {"ftle_unit", kind == "analytic" ? "1/time" : "1/step"}, {"points", s.size()}, {"valid_points", s.valid_count()},
                  {"coverage", s.coverage()}, {"mean_theta", mean_valid(s.theta)}};
    try {
      entry["total_variation"] = total_variation(s);
    } catch (const InsufficientDataError& e) {
      warn("angles(" + kind + "): " + e.what());
      entry["total_variation"] = nullptr;
    }
    if (d.flow) {
      if (!have_vectors) throw ConfigError("diagnostics.flow needs CLV vectors; rerun 'clv' with --dump-vectors");
      const int j = neutral_column(clvs_[kind]);
      const auto flow = kind == "analytic" ? flow_alignment(raw(), ode(), clvs_[kind], j)
                                           : surrogate_flow_alignment(observed(), model().hyper.m, clvs_[kind], j);
      s.flow_theta = flow.theta;
      entry["flow"] = {{"column", j + 1}, {"surrogate_tangent", flow.surrogate_tangent},
                       {"mean_theta", mean_valid(flow.theta)}};
    }
    const auto states = states_for(kind);
    if (!states.empty()) {
      s.assign_states(states);
      try {
        const auto m = delta_state_means(s, 0, 1, d.exclude_window);
        entry["delta"] = {{"states", d.states}, {"delta", m.delta}, {"mean_a", m.mean_a}, {"mean_b", m.mean_b},
                          {"count_a", m.count_a}, {"count_b", m.count_b}, {"valid", m.valid}};
        if (!m.valid) warn("angles(" + kind + "): delta coverage below one half");
      } catch (const InsufficientDataError& e) {
        warn("angles(" + kind + "): " + e.what());
        entry["delta"] = nullptr;
      }
    }
    std::ostringstream out;
    report::write_alignment_csv(out, s);
    emit("alignment_" + kind + ".csv", "alignment-csv/1", out.str());
    diag[kind] = std::move(entry);
  }
  emit("diagnostics.json", "diagnostics-json/1", diag.dump(1) + "\n");
}

void Runner::gridsearch() {
  stage = "gridsearch";
  if (!c_.grid) throw ConfigError("gridsearch: no [gridsearch] table in the config");
  const auto& g = *c_.grid;
  const auto src = source(g.cocycle);
  GridMetricSpec spec;
  spec.states = states_for(g.cocycle);
  spec.delta = !spec.states.empty();
  spec.exclude_window = c_.diagnostics.exclude_window;
  spec.i = c_.diagnostics.i - 1;
  spec.j = c_.diagnostics.j - 1;
  spdlog::info("grid search over {} x {} cells on the {} cocycle", g.N.size(), g.n.size(), g.cocycle);
  const auto rep = clvlab::gridsearch(src, {g.begin, g.end, g.stride}, g.N, g.n, spec, Execution::parallel);
  for (const auto& m : rep.messages) {
    if (!m.empty()) warn("gridsearch: " + m);
  }
  const json metric = {{"delta", spec.delta}, {"tv", spec.tv}, {"states", c_.diagnostics.states},
                       {"exclude_window", spec.exclude_window}, {"pair", {spec.i + 1, spec.j + 1}},
                       {"cocycle", g.cocycle}, {"t_range", {g.begin, g.end, g.stride}}};
  report::write_grid_report(dir_ / "grid", rep, metric.dump());
  for (const char* f : {"delta.csv", "tv.csv", "failures.csv"}) record(std::string("grid/") + f, "grid-matrix-csv/1");
  record("grid/grid.json", "grid-json/1");
}

void write_manifest(const ExperimentConfig& c, const fs::path& dir, const std::string& command,
                    const std::map<std::string, FileEntry>& produced, const std::vector<std::string>& warnings,
                    const json& error) {
  const fs::path path = dir / "manifest.json";
  json files = json::object();
  json old_warnings = json::array();
  if (fs::exists(path)) {
    try {
      const auto prev = json::parse(io::read_file(path));
      for (const auto& f : prev.value("files", json::array())) {
        const std::string rel = f.at("path");
        if (!produced.count(rel) && fs::exists(dir / rel)) files[rel] = f;
      }
      if (prev.value("seed", c.seed) == c.seed) old_warnings = prev.value("warnings", json::array());
    } catch (const std::exception&) {
      // A corrupt manifest from an earlier run is replaced.
    }
  }
  for (const auto& [rel, e] : produced) {
    files[rel] = {{"path", rel}, {"schema", e.schema}, {"fnv1a64", e.digest}, {"bytes", e.bytes}};
  }
  json list = json::array();
  for (auto& [rel, f] : files.items()) {
    // Hashes of carried-over entries are refreshed so the manifest matches disk.
    f["fnv1a64"] = io::file_digest(dir / rel);
    f["bytes"] = fs::file_size(dir / rel);
    list.push_back(f);
  }
  json all_warnings = old_warnings;
  for (const auto& w : warnings) {
    if (std::find(all_warnings.begin(), all_warnings.end(), w) == all_warnings.end()) all_warnings.push_back(w);
  }
  json doc = {{"format_version", kManifestFormatVersion},
              {"name", c.name},
              {"seed", c.seed},
              {"command", command},
              {"status", error.is_null() ? "ok" : "error"},
              {"config", config_to_json(c)},
              {"files", list},
              {"warnings", all_warnings}};
  if (!error.is_null()) doc["error"] = error;
  report::write_text(path, doc.dump(1) + "\n");
}

}  // namespace

RunResult execute(const ExperimentConfig& config, Stage stage, const RunOptions& options) {
  RunResult result;
  const std::string command = stage_name(stage);
  try {
    validate(config);
  } catch (const ConfigError& e) {
    // Nothing is written when the recipe itself is invalid.
    result.exit_code = 2;
    result.stage = "config";
    result.message = e.what();
    return result;
  }
  fs::create_directories(config.output_dir);
  Runner run(config, options);
  json error;
  try {
    switch (stage) {
      case Stage::simulate: run.simulate(); break;
      case Stage::embed: run.embed(); break;
      case Stage::fit: run.fit(); break;
      case Stage::lcurve: run.lcurve(); break;
      case Stage::clv: run.clv(); break;
      case Stage::angles: run.angles(); break;
      case Stage::gridsearch: run.gridsearch(); break;
      case Stage::run:
        run.simulate();
        if (config.embedding) run.embed();
        if (config.fembv) {
          if (!config.fembv->p_grid.empty()) run.lcurve();
          run.fit();
        }
        if (config.clv) {
          run.clv();
          run.angles();
        }
        if (config.grid) run.gridsearch();
        break;
    }
  } catch (const std::exception& e) {
    const std::string kind = error_kind(e);
    result.exit_code = exit_code_for(kind);
    result.stage = run.stage;
    result.message = e.what();
    error = {{"exit_code", result.exit_code}, {"stage", run.stage}, {"kind", kind}, {"message", e.what()}};
  }
  const fs::path err_file = config.output_dir / "error.json";
  if (error.is_null()) {
    fs::remove(err_file);
  } else {
    report::write_text(err_file, error.dump(1) + "\n");
  }
  write_manifest(config, config.output_dir, command, run.files(), run.warnings(), error);
  for (const auto& [rel, e] : run.files()) result.files.push_back(rel);
  result.warnings = run.warnings();
  return result;
}

}  // namespace clvlab::pipeline
