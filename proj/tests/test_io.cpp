#include "clvlab/error.hpp"
#include "clvlab/io.hpp"

#include "doctest.h"

#include <random>
#include <sstream>

using namespace clvlab;

TEST_CASE("series CSV header and round trip") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1e3);
  TimeSeries ts;
  ts.dt = 0.003;
  ts.t0 = 1.5;
  ts.values.resize(64, 3);
  for (Index r = 0; r < 64; ++r)
    for (Index c = 0; c < 3; ++c) ts.values(r, c) = n(rng) * std::pow(10.0, static_cast<double>(r % 7) - 3);
  std::stringstream ss;
  io::write_series_csv(ss, ts);
  std::string header;
  std::getline(std::istringstream(ss.str()), header);
  CHECK(header == "t,x1,x2,x3");
  const auto back = io::read_series_csv(ss);
  CHECK(back.values == ts.values);
  CHECK(back.dt == doctest::Approx(0.003));
  CHECK(back.t0 == 1.5);
}

TEST_CASE("single-column CSV without header or time") {
  std::istringstream in("1.0\n2.5\n-3\n");
  const auto ts = io::read_series_csv(in, {0.25});
  CHECK(ts.length() == 3);
  CHECK(ts.dim() == 1);
  CHECK(ts.dt == 0.25);
  CHECK(ts.values(2, 0) == -3.0);
}

TEST_CASE("CSV with a named observable column and no time") {
  std::istringstream in("obs\n0.1\n0.2\n");
  const auto ts = io::read_series_csv(in);
  CHECK(ts.dim() == 1);
  CHECK(ts.length() == 2);
}

TEST_CASE("CSV errors") {
  std::istringstream ragged("t,x1\n0,1\n1,2,3\n");
  CHECK_THROWS_AS(io::read_series_csv(ragged), ShapeError);
  std::istringstream text("t,x1\n0,abc\n");
  CHECK_THROWS_AS(io::read_series_csv(text), ParameterError);
  std::istringstream uneven("t,x1\n0,1\n1,2\n5,3\n");
  CHECK_THROWS_AS(io::read_series_csv(uneven), ParameterError);
  std::istringstream empty("t,x1\n");
  CHECK_THROWS_AS(io::read_series_csv(empty), ShapeError);
}

TEST_CASE("format_double is exact") {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0}) {
    CHECK(std::stod(io::format_double(v)) == v);
  }
}

TEST_CASE("fnv1a64 reference values") {
  CHECK(io::fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(io::fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
}
