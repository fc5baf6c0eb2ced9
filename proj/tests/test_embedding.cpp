#include "clvlab/dynsys.hpp"
#include "clvlab/embedding.hpp"
#include "clvlab/error.hpp"

#include "doctest.h"

#include <random>

using namespace clvlab;

namespace {

TimeSeries scalar(std::initializer_list<double> v) {
  TimeSeries ts;
  ts.dt = 0.5;
  ts.values.resize(static_cast<Index>(v.size()), 1);
  Index k = 0;
  for (double x : v) ts.values(k++, 0) = x;
  return ts;
}

// Lloyd iterations for two centroids; returns the smaller cluster fraction.
double two_means_minority_fraction(const Mat& pts) {
  Vec c0 = pts.row(0).transpose();
  Vec c1 = pts.row(pts.rows() / 2).transpose();
  // Start from the two points farthest apart along the first coordinate.
  Index lo, hi;
  pts.col(0).minCoeff(&lo);
  pts.col(0).maxCoeff(&hi);
  c0 = pts.row(lo).transpose();
  c1 = pts.row(hi).transpose();
  std::vector<int> lab(static_cast<std::size_t>(pts.rows()), 0);
  for (int it = 0; it < 50; ++it) {
    Vec s0 = Vec::Zero(pts.cols()), s1 = Vec::Zero(pts.cols());
    Index n0 = 0, n1 = 0;
    for (Index r = 0; r < pts.rows(); ++r) {
      const Vec p = pts.row(r).transpose();
      lab[r] = (p - c0).squaredNorm() <= (p - c1).squaredNorm() ? 0 : 1;
      if (lab[r] == 0) {
        s0 += p;
        ++n0;
      } else {
        s1 += p;
        ++n1;
      }
    }
    if (n0 == 0 || n1 == 0) return 0.0;
    c0 = s0 / static_cast<double>(n0);
    c1 = s1 / static_cast<double>(n1);
  }
  Index n1 = 0;
  for (int l : lab) n1 += l;
  const double f = static_cast<double>(n1) / static_cast<double>(pts.rows());
  return std::min(f, 1.0 - f);
}

}  // namespace

TEST_CASE("delay embedding of a ramp") {
  const auto out = delay_embed(scalar({0, 1, 2, 3, 4, 5}), {1, 3});
  REQUIRE(out.length() == 4);
  REQUIRE(out.dim() == 3);
  for (Index k = 0; k < 4; ++k) {
    for (Index c = 0; c < 3; ++c) CHECK(out.values(k, c) == static_cast<double>(k + c));
  }
  CHECK(out.dt == 0.5);
}

TEST_CASE("constant series embeds to identical rows") {
  const auto out = delay_embed(scalar({2, 2, 2, 2, 2, 2, 2}), {2, 3});
  for (Index k = 1; k < out.length(); ++k) CHECK(out.values.row(k) == out.values.row(0));
}

TEST_CASE("embedding errors") {
  CHECK_THROWS_AS(delay_embed(scalar({0, 1, 2, 3}), {2, 3}), ShapeError);
  CHECK_THROWS_AS(delay_embed(scalar({0, 1, 2, 3}), {0, 3}), ParameterError);
  CHECK_THROWS_AS(delay_embed(scalar({0, 1, 2, 3}), {1, 1}), ParameterError);
  TimeSeries two;
  two.values = Mat::Zero(10, 2);
  CHECK_THROWS_AS(delay_embed(two, {1, 3}), ShapeError);
  try {
    delay_embed(scalar({0, 1, 2, 3}), {2, 3});
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("at least 5") != std::string::npos);
  }
}

TEST_CASE("length formula and bit-identical shifted columns") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n;
  for (int trial = 0; trial < 40; ++trial) {
    const long T = 10 + static_cast<long>(rng() % 200);
    const long dim = 2 + static_cast<long>(rng() % 4);
    const long delay = 1 + static_cast<long>(rng() % 10);
    TimeSeries s;
    s.values.resize(T, 1);
    for (long k = 0; k < T; ++k) s.values(k, 0) = n(rng);
    if (T <= (dim - 1) * delay) {
      CHECK_THROWS_AS(delay_embed(s, {delay, dim}), ShapeError);
      continue;
    }
    const auto out = delay_embed(s, {delay, dim});
    CHECK(out.length() == T - (dim - 1) * delay);
    for (long c = 0; c < dim; ++c) {
      CHECK(out.values.col(c) == s.values.col(0).segment(c * delay, out.length()));
    }
  }
}

TEST_CASE("Lorenz x embedding has two lobes") {
  const auto traj = simulate(lorenz63(), Vec::Ones(3), 0.01, 20000, 1000);
  const auto emb = delay_embed(traj.column(0), {10, 3});
  CHECK(two_means_minority_fraction(emb.values) > 0.2);
}
