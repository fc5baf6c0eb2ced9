#include "clvlab/dynsys.hpp"

#include "clvlab/error.hpp"

#include <sstream>

namespace clvlab {

namespace {

void check_state(const OdeModel& model, const Vec& state, double dt) {
  if (!(dt > 0.0)) throw ParameterError("dt must be positive");
  if (state.size() != model.dim) {
    throw ShapeError(model.name + ": state has dimension " + std::to_string(state.size()) +
                     ", model expects " + std::to_string(model.dim));
  }
}

[[noreturn]] void blowup(const OdeModel& model, double time, const Vec& state) {
  std::ostringstream msg;
  msg << model.name << ": integration blew up at t=" << time << " from state ["
      << state.transpose() << "]";
  throw IntegrationError(msg.str());
}

double param(const std::map<std::string, double>& p, const char* key) { return p.at(key); }

}  // namespace

OdeModel fitzhugh_nagumo(double eps, double a, double b) {
  if (!(eps > 0.0)) throw ParameterError("fhn: eps must be positive");
  OdeModel m;
  m.name = "fhn";
  m.dim = 2;
  m.params = {{"eps", eps}, {"a", a}, {"b", b}};
  m.vector_field = [eps, a, b](const Vec& s) {
    Vec f(2);
    const double x = s[0], y = s[1];
    f[0] = (x - x * x * x / 3.0 - y) / eps;
    f[1] = x + a - b * y;
    return f;
  };
  m.jacobian = [eps, b](const Vec& s) {
    Mat j(2, 2);
    const double x = s[0];
    j << (1.0 - x * x) / eps, -1.0 / eps,
         1.0, -b;
    return j;
  };
  return m;
}

OdeModel lorenz63(double sigma, double rho, double beta) {
  OdeModel m;
  m.name = "lorenz63";
  m.dim = 3;
  m.params = {{"sigma", sigma}, {"rho", rho}, {"beta", beta}};
  m.vector_field = [sigma, rho, beta](const Vec& s) {
    Vec f(3);
    f[0] = sigma * (s[1] - s[0]);
    f[1] = s[0] * (rho - s[2]) - s[1];
    f[2] = s[0] * s[1] - beta * s[2];
    return f;
  };
  m.jacobian = [sigma, rho, beta](const Vec& s) {
    Mat j(3, 3);
    j << -sigma, sigma, 0.0,
         rho - s[2], -1.0, -s[0],
         s[1], s[0], -beta;
    return j;
  };
  return m;
}

OdeModel linear_model(const Mat& generator) {
  if (generator.rows() != generator.cols() || generator.rows() == 0) {
    throw ShapeError("linear model: generator must be square and non-empty");
  }
  OdeModel m;
  m.name = "linear";
  m.dim = static_cast<int>(generator.rows());
  m.vector_field = [generator](const Vec& s) -> Vec { return generator * s; };
  m.jacobian = [generator](const Vec&) -> Mat { return generator; };
  return m;
}

OdeModel make_model(const std::string& name, const std::map<std::string, double>& overrides) {
  std::map<std::string, double> p;
  if (name == "fhn") {
    p = fitzhugh_nagumo().params;
  } else if (name == "lorenz63" || name == "lorenz") {
    p = lorenz63().params;
  } else {
    throw ParameterError("unknown model '" + name + "' (expected fhn or lorenz63)");
  }
  for (const auto& [key, value] : overrides) {
    if (!p.count(key)) throw ParameterError("model " + name + " has no parameter '" + key + "'");
    p[key] = value;
  }
  if (name == "fhn") return fitzhugh_nagumo(param(p, "eps"), param(p, "a"), param(p, "b"));
  return lorenz63(param(p, "sigma"), param(p, "rho"), param(p, "beta"));
}

SimulationDefaults default_simulation(const std::string& model_name) {
  if (model_name == "fhn") {
    // ~37 relaxation cycles; the cycle is reached within the first period.
    return {(Vec(2) << 2.0, 0.0).finished(), 0.003, 20000, 0};
  }
  if (model_name == "lorenz63" || model_name == "lorenz") {
    return {(Vec(3) << 1.0, 1.0, 1.0).finished(), 0.01, 20000, 10000};
  }
  throw ParameterError("unknown model '" + model_name + "'");
}

Vec rk4_step(const OdeModel& model, const Vec& state, double dt, double time) {
  check_state(model, state, dt);
  const Vec k1 = model.vector_field(state);
  const Vec k2 = model.vector_field(state + 0.5 * dt * k1);
  const Vec k3 = model.vector_field(state + 0.5 * dt * k2);
  const Vec k4 = model.vector_field(state + dt * k3);
  Vec next = state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  if (!next.allFinite()) blowup(model, time, state);
  return next;
}

TimeSeries simulate(const OdeModel& model, const Vec& x0, double dt, long steps, long discard) {
  if (steps < 2) throw ParameterError("simulate: steps must be >= 2");
  if (discard < 0) throw ParameterError("simulate: discard must be >= 0");
  check_state(model, x0, dt);
  if (!x0.allFinite()) throw ParameterError("simulate: non-finite initial state");

  Vec x = x0;
  for (long k = 0; k < discard; ++k) x = rk4_step(model, x, dt, static_cast<double>(k) * dt);

  TimeSeries out;
  out.dt = dt;
  out.t0 = static_cast<double>(discard) * dt;
  out.values.resize(steps, model.dim);
  out.values.row(0) = x.transpose();
  for (long k = 1; k < steps; ++k) {
    x = rk4_step(model, x, dt, out.time(k - 1));
    out.values.row(k) = x.transpose();
  }
  return out;
}

Mat tangent_propagator(const OdeModel& model, const Vec& state, double dt) {
  check_state(model, state, dt);
  const Index d = model.dim;
  const Mat eye = Mat::Identity(d, d);

  const Vec k1x = model.vector_field(state);
  const Mat k1m = model.jacobian(state);
  const Vec x2 = state + 0.5 * dt * k1x;
  const Mat m2 = eye + 0.5 * dt * k1m;
  const Vec k2x = model.vector_field(x2);
  const Mat k2m = model.jacobian(x2) * m2;
  const Vec x3 = state + 0.5 * dt * k2x;
  const Mat m3 = eye + 0.5 * dt * k2m;
  const Vec k3x = model.vector_field(x3);
  const Mat k3m = model.jacobian(x3) * m3;
  const Vec x4 = state + dt * k3x;
  const Mat m4 = eye + dt * k3m;
  const Mat k4m = model.jacobian(x4) * m4;

  Mat prop = eye + (dt / 6.0) * (k1m + 2.0 * k2m + 2.0 * k3m + k4m);
  if (!prop.allFinite()) blowup(model, 0.0, state);
  return prop;
}

}  // namespace clvlab
