#include "pipeline.hpp"
#include "recipe_check.hpp"

#include "clvlab/io.hpp"

#include "doctest.h"
#include "json.hpp"

#include <sys/wait.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

using namespace clvlab;
using namespace clvlab::pipeline;
namespace fs = std::filesystem;

namespace {

// Short FHN run with both cocycles; a couple of seconds end to end.
const char* kSmall = R"(
format_version = 1
name = "small"
seed = 11

[input]
model = "fhn"
dt = 0.003
steps = 3000

[fembv]
K = 2
m = 1
p = 100
restarts = 2

[clv]
N = 10
n = 3
cocycles = ["analytic", "var"]

[diagnostics]
states = "labels"
flow = true
)";

ExperimentConfig small(const std::string& dir) {
  auto c = parse_config(kSmall, ".");
  c.output_dir = testing::fresh_dir(dir);
  return c;
}

nlohmann::json manifest(const fs::path& dir) { return nlohmann::json::parse(io::read_file(dir / "manifest.json")); }

int run_cli(const std::string& args) {
  const std::string cmd = std::string(CLVLAB_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path write_config(const std::string& name, const std::string& text) {
  const auto path = fs::temp_directory_path() / ("clvlab-test-" + name + ".toml");
  std::ofstream(path) << text;
  return path;
}

}  // namespace

TEST_CASE("config schema checks") {
  CHECK_NOTHROW(validate(small("schema")));
  CHECK_THROWS_AS(parse_config("format_version = 1\n[input]\nmodel = \"fhn\"\nsteps = \"many\"\n", "."), ConfigError);
  CHECK_THROWS_AS(parse_config("format_version = 1\n[input]\nmodel = \"fhn\"\ncsv = \"x.csv\"\n", "."), ConfigError);
  CHECK_THROWS_AS(parse_config("format_version = 1\ncolour = 3\n[input]\nmodel = \"fhn\"\n", "."), ConfigError);
  CHECK_THROWS_AS(parse_config("format_version = 1\n[input\n", "."), ConfigError);
  CHECK_THROWS_AS(parse_config("[input]\nmodel = \"fhn\"\n", "."), ConfigError);

  auto c = small("schema");
  c.format_version = 2;
  CHECK_THROWS_AS(validate(c), ConfigError);
  c = small("schema");
  c.clv->begin = 50;
  c.clv->end = 50;
  CHECK_THROWS_WITH_AS(validate(c), "clv.t_range: empty range", ConfigError);
  c = small("schema");
  c.input.params["sigma"] = 3.0;
  CHECK_THROWS_AS(validate(c), ConfigError);
  c = small("schema");
  c.fembv.reset();
  CHECK_THROWS_AS(validate(c), ConfigError);  // var cocycle and label states need a fit
  c = small("schema");
  c.output_dir.clear();
  CHECK_THROWS_AS(validate(c), ConfigError);
}

TEST_CASE("an empty t_range exits with 2 before writing anything") {
  auto c = small("empty-range");
  c.clv->begin = 100;
  c.clv->end = 90;
  const auto r = execute(c, Stage::run);
  CHECK(r.exit_code == 2);
  CHECK(r.stage == "config");
  CHECK_FALSE(fs::exists(c.output_dir));
}

TEST_CASE("full run writes a manifest that matches the files on disk") {
  const auto c = small("full");
  const auto r = execute(c, Stage::run, {true});
  REQUIRE(r.exit_code == 0);
  const auto m = manifest(c.output_dir);
  CHECK(m["status"] == "ok");
  CHECK(m["seed"] == 11);
  CHECK(m["format_version"] == kManifestFormatVersion);
  std::set<std::string> listed;
  for (const auto& f : m["files"]) {
    const std::string rel = f["path"];
    const fs::path p = c.output_dir / rel;
    listed.insert(rel);
    REQUIRE(fs::exists(p));
    CHECK(f["fnv1a64"] == io::file_digest(p));
    const std::string schema = f["schema"];
    if (schema == "series-csv/1") {
      CHECK_NOTHROW(io::read_series_csv(p));
    } else if (schema.find("json") != std::string::npos) {
      CHECK(nlohmann::json::accept(io::read_file(p)));
    } else {
      // Remaining CSV schemas: rectangular with a header row.
      std::ifstream in(p);
      std::string line;
      std::getline(in, line);
      const auto cols = std::count(line.begin(), line.end(), ',');
      while (std::getline(in, line)) CHECK(std::count(line.begin(), line.end(), ',') == cols);
    }
  }
  for (const char* f : {"series.csv", "model.json", "reconstruction.csv", "clv_analytic.csv", "clv_var.csv",
                        "alignment_analytic.csv", "alignment_var.csv", "diagnostics.json",
                        "clv_var_vectors.json", "companion.json"}) {
    CHECK(listed.count(f) == 1);
  }
  std::ifstream align(c.output_dir / "alignment_var.csv");
  std::string header;
  std::getline(align, header);
  CHECK(header == "t,theta12,state,flow_theta");
}

TEST_CASE("reruns are byte-identical and stages compose through files") {
  const auto a = small("rerun-a");
  const auto b = small("rerun-b");
  REQUIRE(execute(a, Stage::run, {true}).exit_code == 0);
  REQUIRE(execute(b, Stage::run, {true}).exit_code == 0);
  CHECK(testing::digest_tree(a.output_dir) == testing::digest_tree(b.output_dir));

  const auto s = small("staged");
  for (Stage st : {Stage::simulate, Stage::fit, Stage::clv, Stage::angles}) {
    REQUIRE(execute(s, st, {true}).exit_code == 0);
  }
  const auto full = testing::digest_tree(a.output_dir);
  const auto staged = testing::digest_tree(s.output_dir);
  for (const auto& [rel, digest] : staged) {
    if (rel == "manifest.json") continue;  // records the last command
    CHECK_MESSAGE(full.at(rel) == digest, rel);
  }
  CHECK(manifest(s.output_dir)["files"].size() == manifest(a.output_dir)["files"].size());
}

TEST_CASE("a different seed is recorded and changes the fit") {
  auto c = small("seed");
  c.seed = 12;
  REQUIRE(execute(c, Stage::run).exit_code == 0);
  CHECK(manifest(c.output_dir)["seed"] == 12);
  CHECK(nlohmann::json::parse(io::read_file(c.output_dir / "model.json"))["master_seed"] == 12);
}

TEST_CASE("stage errors report exit status and stage") {
  SUBCASE("missing upstream artifact") {
    const auto c = small("missing");
    const auto r = execute(c, Stage::clv);
    CHECK(r.exit_code == 2);
    CHECK(r.stage.rfind("clv", 0) == 0);
  }
  SUBCASE("integration failure") {
    auto c = parse_config("format_version = 1\n[input]\nmodel = \"lorenz63\"\ndt = 0.5\nsteps = 200\ndiscard = 0\n", ".");
    c.output_dir = testing::fresh_dir("blowup");
    const auto r = execute(c, Stage::run);
    CHECK(r.exit_code == 3);
    CHECK(r.stage == "simulate");
    const auto err = nlohmann::json::parse(io::read_file(c.output_dir / "error.json"));
    CHECK(err["kind"] == "IntegrationError");
    CHECK(manifest(c.output_dir)["status"] == "error");
  }
  SUBCASE("flow alignment without stored vectors") {
    const auto c = small("novectors");
    for (Stage st : {Stage::simulate, Stage::fit, Stage::clv}) REQUIRE(execute(c, st).exit_code == 0);
    CHECK(execute(c, Stage::angles).exit_code == 2);
  }
}

TEST_CASE("grid search records failed cells as warnings") {
  auto c = small("grid");
  c.grid = GridConfig{{5, 2000}, {1, 3}, 100, 2900, 20, "var"};
  c.diagnostics.states = "sign";
  const auto r = execute(c, Stage::run);
  REQUIRE(r.exit_code == 0);
  const auto m = manifest(c.output_dir);
  CHECK(m["status"] == "ok");
  CHECK(m["warnings"].size() >= 2);
  const std::string failures = io::read_file(c.output_dir / "grid" / "failures.csv");
  CHECK(failures == "N\\n,1,3\n5,0,0\n2000,1,1\n");
}

TEST_CASE("external CSV with delay embedding") {
  const auto dir = testing::fresh_dir("csv-input");
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "obs.csv");
    out << "x\n";
    for (int k = 0; k < 400; ++k) out << std::sin(0.05 * k) + 0.3 * std::sin(0.31 * k) << "\n";
  }
  auto c = parse_config(
      "format_version = 1\n[input]\ncsv = \"obs.csv\"\ndt = 0.5\n[embedding]\ndelay = 4\ndim = 2\n"
      "[fembv]\nK = 1\nm = 1\np = 400\nrestarts = 1\n[clv]\nN = 5\nn = 2\n",
      dir);
  c.output_dir = dir / "out";
  const auto r = execute(c, Stage::run);
  REQUIRE(r.exit_code == 0);
  const auto emb = io::read_series_csv(c.output_dir / "embedded.csv");
  CHECK(emb.dim() == 2);
  CHECK(emb.length() == 396);
  CHECK(emb.dt == 0.5);
}

TEST_CASE("command line front end") {
  const auto dir = testing::fresh_dir("cli");
  const auto good = write_config("cli-good", kSmall);
  CHECK(run_cli("simulate --config " + good.string() + " --output " + dir.string() + " --seed 5 --threads 1") == 0);
  CHECK(fs::exists(dir / "series.csv"));
  CHECK(manifest(dir)["seed"] == 5);

  std::string bad = kSmall;
  bad.replace(bad.find("n = 3"), 5, "n = 3\nt_range = [40, 40]");
  const auto bad_path = write_config("cli-bad", bad);
  CHECK(run_cli("run --config " + bad_path.string() + " --output " + dir.string()) == 2);
  CHECK(run_cli("run --config " + good.string()) == 2);  // no output directory anywhere
  CHECK(run_cli("frobnicate --config " + good.string()) == 2);
  CHECK(run_cli("run --config /nonexistent.toml --output " + dir.string()) == 2);
}
