#pragma once

#include "clvlab/timeseries.hpp"

#include <functional>
#include <map>
#include <string>

namespace clvlab {

/// Autonomous ODE x' = f(x) with an analytic Jacobian.
struct OdeModel {
  std::string name;
  int dim = 0;
  std::map<std::string, double> params;
  std::function<Vec(const Vec&)> vector_field;
  std::function<Mat(const Vec&)> jacobian;
};

/// FitzHugh-Nagumo in slow time: eps x' = x - x^3/3 - y, y' = x + a - b y.
OdeModel fitzhugh_nagumo(double eps = 0.01, double a = 0.4, double b = 0.3);

/// Lorenz 63: x' = sigma (y - x), y' = x (rho - z) - y, z' = x y - beta z.
OdeModel lorenz63(double sigma = 10.0, double rho = 28.0, double beta = 8.0 / 3.0);

/// x' = A x.
OdeModel linear_model(const Mat& generator);

/// Looks up a built-in model ("fhn", "lorenz63") and applies parameter
/// overrides. Unknown names or parameters throw ParameterError.
OdeModel make_model(const std::string& name, const std::map<std::string, double>& overrides = {});

/// Defaults used when a recipe does not specify them.
struct SimulationDefaults {
  Vec x0;
  double dt;
  long steps;
  long discard;
};
SimulationDefaults default_simulation(const std::string& model_name);

/// One classical RK4 step. `time` only labels the error message.
Vec rk4_step(const OdeModel& model, const Vec& state, double dt, double time = 0.0);

/// Integrates `discard + steps - 1` RK4 steps and keeps the last `steps`
/// states. t0 of the result is discard * dt.
TimeSeries simulate(const OdeModel& model, const Vec& x0, double dt, long steps, long discard = 0);

/// One-step propagator of the variational equation M' = J(x(t)) M, M(0) = I,
/// integrated with RK4 jointly with the base point.
Mat tangent_propagator(const OdeModel& model, const Vec& state, double dt);

}  // namespace clvlab
