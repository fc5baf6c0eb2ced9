#include "clvlab/dynsys.hpp"
#include "clvlab/error.hpp"

#include "doctest.h"
#include "support.hpp"

#include <algorithm>
#include <cmath>

using namespace clvlab;

namespace {

OdeModel zero_field(int dim) { return linear_model(Mat::Zero(dim, dim)); }

OdeModel decay() { return linear_model(Mat::Constant(1, 1, -1.0)); }

}  // namespace

TEST_CASE("rk4_step on a zero field leaves the state unchanged") {
  const Vec x = (Vec(3) << 1.5, -2.0, 7.0).finished();
  CHECK(rk4_step(zero_field(3), x, 0.1) == x);
}

TEST_CASE("rk4_step on x' = -x matches exp(-dt)") {
  const Vec x = Vec::Constant(1, 1.0);
  const double next = rk4_step(decay(), x, 0.1)[0];
  CHECK(next == doctest::Approx(0.9048375).epsilon(1e-7));
  CHECK(std::abs(next - std::exp(-0.1)) < 1e-6);
}

TEST_CASE("rk4_step reports blow-ups with time and state") {
  OdeModel bad = decay();
  bad.vector_field = [](const Vec& s) -> Vec { return s.array() / 0.0; };
  try {
    rk4_step(bad, Vec::Constant(1, 1.0), 0.1, 4.5);
    FAIL("expected IntegrationError");
  } catch (const IntegrationError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("t=4.5") != std::string::npos);
    CHECK(msg.find("state") != std::string::npos);
  }
}

TEST_CASE("rk4_step validates dt and dimension") {
  CHECK_THROWS_AS(rk4_step(decay(), Vec::Constant(1, 1.0), 0.0), ParameterError);
  CHECK_THROWS_AS(rk4_step(decay(), Vec::Constant(2, 1.0), 0.1), ShapeError);
}

TEST_CASE("built-in models: defaults, dimensions and overrides") {
  const auto lz = make_model("lorenz63");
  CHECK(lz.dim == 3);
  CHECK(lz.params.at("sigma") == 10.0);
  CHECK(lz.params.at("rho") == 28.0);
  CHECK(lz.params.at("beta") == doctest::Approx(8.0 / 3.0));
  const auto fhn = make_model("fhn", {{"a", 0.5}});
  CHECK(fhn.dim == 2);
  CHECK(fhn.params.at("a") == 0.5);
  CHECK(fhn.params.at("eps") == 0.01);
  CHECK_THROWS_AS(make_model("rossler"), ParameterError);
  CHECK_THROWS_AS(make_model("fhn", {{"sigma", 1.0}}), ParameterError);
}

TEST_CASE("Lorenz steps without error at dt = 0.01") {
  const auto lz = lorenz63(10.0, 28.0, 8.0 / 3.0);
  Vec x = Vec::Ones(3);
  for (int k = 0; k < 100; ++k) x = rk4_step(lz, x, 0.01);
  CHECK(x.allFinite());
}

TEST_CASE("analytic Jacobians agree with finite differences") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-20.0, 20.0);
  for (const auto& model : {lorenz63(), fitzhugh_nagumo()}) {
    for (int trial = 0; trial < 50; ++trial) {
      Vec x(model.dim);
      for (int i = 0; i < model.dim; ++i) x[i] = model.dim == 2 ? u(rng) / 8.0 : u(rng);
      const Mat analytic = model.jacobian(x);
      const Mat fd = testing::finite_difference_jacobian(model, x);
      const double rel = (analytic - fd).norm() / analytic.norm();
      CHECK(rel < 1e-5);
    }
  }
}

TEST_CASE("Lorenz Jacobian at the origin") {
  const auto lz = lorenz63();
  Mat expected(3, 3);
  expected << -10.0, 10.0, 0.0,
              28.0, -1.0, 0.0,
              0.0, 0.0, -8.0 / 3.0;
  CHECK((lz.jacobian(Vec::Zero(3)) - expected).norm() < 1e-15);
}

TEST_CASE("simulate on a zero field is constant") {
  const Vec x0 = (Vec(2) << 0.3, -0.4).finished();
  const auto ts = simulate(zero_field(2), x0, 0.1, 50, 5);
  CHECK(ts.length() == 50);
  CHECK(ts.t0 == doctest::Approx(0.5));
  for (Index k = 0; k < ts.length(); ++k) CHECK(ts.values.row(k).transpose() == x0);
}

TEST_CASE("simulate rejects bad sizes") {
  CHECK_THROWS_AS(simulate(decay(), Vec::Ones(1), 0.1, 1), ParameterError);
  CHECK_THROWS_AS(simulate(decay(), Vec::Ones(1), 0.1, 10, -1), ParameterError);
}

TEST_CASE("FHN relaxation oscillation covers roughly [-2, 2]") {
  const auto fhn = fitzhugh_nagumo(0.01, 0.4, 0.3);
  const auto def = default_simulation("fhn");
  const auto ts = simulate(fhn, def.x0, 0.003, 20000, 0);
  const double lo = ts.values.col(0).minCoeff();
  const double hi = ts.values.col(0).maxCoeff();
  CHECK(lo < -1.8);
  CHECK(lo > -2.3);
  CHECK(hi > 1.8);
  CHECK(hi < 2.3);
  // At least five full cycles: count upward zero crossings of x.
  int crossings = 0;
  for (Index k = 1; k < ts.length(); ++k) crossings += ts.values(k - 1, 0) < 0.0 && ts.values(k, 0) >= 0.0;
  CHECK(crossings >= 5);
}

TEST_CASE("FHN slow segments follow the critical manifold") {
  const auto fhn = fitzhugh_nagumo();
  const auto ts = simulate(fhn, default_simulation("fhn").x0, 0.003, 20000, 0);
  std::vector<double> speed;
  for (Index k = 0; k < ts.length(); ++k) speed.push_back(std::abs(fhn.vector_field(ts.values.row(k).transpose())[0]));
  std::vector<double> sorted = speed;
  std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 5, sorted.end());
  const double cutoff = sorted[sorted.size() / 5];
  std::vector<double> resid;
  for (Index k = 0; k < ts.length(); ++k) {
    if (speed[k] >= cutoff) continue;
    const double x = ts.values(k, 0), y = ts.values(k, 1);
    resid.push_back(std::abs(y - (x - x * x * x / 3.0)));
  }
  REQUIRE(!resid.empty());
  std::nth_element(resid.begin(), resid.begin() + resid.size() / 2, resid.end());
  CHECK(resid[resid.size() / 2] < 0.05);
}

TEST_CASE("Lorenz trajectory stays bounded") {
  const auto ts = simulate(lorenz63(), Vec::Ones(3), 0.01, 50000, 0);
  CHECK(ts.values.col(2).cwiseAbs().maxCoeff() < 60.0);
}

TEST_CASE("tangent propagator oracles") {
  SUBCASE("zero field gives the identity") {
    CHECK((tangent_propagator(zero_field(3), Vec::Ones(3), 0.1) - Mat::Identity(3, 3)).norm() == 0.0);
  }
  SUBCASE("linear diag(1, -1) matches the matrix exponential") {
    const Mat a = (Mat(2, 2) << 1.0, 0.0, 0.0, -1.0).finished();
    const Mat prop = tangent_propagator(linear_model(a), Vec::Ones(2), 0.1);
    CHECK(std::abs(prop(0, 0) - std::exp(0.1)) < 1e-6);
    CHECK(std::abs(prop(1, 1) - std::exp(-0.1)) < 1e-6);
    CHECK(std::abs(prop(0, 1)) < 1e-15);
    CHECK(std::abs(prop(1, 0)) < 1e-15);
  }
  SUBCASE("composition of two half steps") {
    const Mat a = (Mat(2, 2) << 0.3, -1.0, 0.8, -0.2).finished();
    const auto lin = linear_model(a);
    const double dt = 0.05;
    const Mat one = tangent_propagator(lin, Vec::Ones(2), 2.0 * dt);
    const Mat two = tangent_propagator(lin, Vec::Ones(2), dt) * tangent_propagator(lin, Vec::Ones(2), dt);
    CHECK((one - two).norm() / two.norm() < 1e-6);
  }
  SUBCASE("nonlinear propagator approaches the Jacobian exponential for small dt") {
    const auto lz = lorenz63();
    const Vec x = (Vec(3) << 1.0, 2.0, 20.0).finished();
    const Mat prop = tangent_propagator(lz, x, 1e-4);
    const Mat expected = testing::matrix_exponential(lz.jacobian(x) * 1e-4);
    CHECK((prop - expected).norm() < 1e-6);
  }
}

TEST_CASE("simulation is bit-for-bit deterministic") {
  const auto a = simulate(lorenz63(), Vec::Ones(3), 0.01, 2000, 100);
  const auto b = simulate(lorenz63(), Vec::Ones(3), 0.01, 2000, 100);
  CHECK(a.values == b.values);
}
