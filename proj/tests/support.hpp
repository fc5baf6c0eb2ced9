#pragma once

// Test-only helpers and independent oracles. Nothing here calls into the
// code paths it is used to check.

#include "clvlab/dynsys.hpp"
#include "clvlab/fembv.hpp"
#include "clvlab/timeseries.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <vector>

namespace clvlab::testing {

inline Mat random_matrix(Index rows, Index cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Mat m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = n(rng);
  return m;
}

inline Mat random_orthonormal(Index d, Index k, std::mt19937_64& rng) {
  Eigen::HouseholderQR<Mat> qr(random_matrix(d, k, rng));
  return qr.householderQ() * Mat::Identity(d, k);
}

// Central differences of the vector field.
inline Mat finite_difference_jacobian(const OdeModel& model, const Vec& x, double h = 1e-6) {
  Mat j(model.dim, model.dim);
  for (int c = 0; c < model.dim; ++c) {
    Vec xp = x, xm = x;
    xp[c] += h;
    xm[c] -= h;
    j.col(c) = (model.vector_field(xp) - model.vector_field(xm)) / (2.0 * h);
  }
  return j;
}

// Truncated Taylor series; accurate for the small arguments used in tests.
inline Mat matrix_exponential(const Mat& a, int terms = 30) {
  Mat out = Mat::Identity(a.rows(), a.cols());
  Mat term = out;
  for (int k = 1; k < terms; ++k) {
    term = (term * a / static_cast<double>(k)).eval();
    out += term;
  }
  return out;
}

// Cosine of the largest principal angle between two subspaces given by
// orthonormal bases of equal width.
inline double subspace_min_cosine(const Mat& a, const Mat& b) {
  Eigen::JacobiSVD<Mat> svd(a.transpose() * b);
  return svd.singularValues().minCoeff();
}

struct RegimeSeries {
  TimeSeries series;
  std::vector<int> labels;
  std::vector<ClusterParams> truth;
  double injected_noise_sq = 0.0;  // sum over t >= m of ||noise_t||^2
};

// VAR(1) regimes switching at the given change points.
inline RegimeSeries two_regime_var1(const std::vector<ClusterParams>& regimes, Index T,
                                    const std::vector<Index>& switches, double noise,
                                    std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, noise);
  const Index d = regimes[0].dim();
  RegimeSeries out;
  out.truth = regimes;
  out.series.dt = 1.0;
  out.series.values = Mat::Zero(T, d);
  out.labels.assign(static_cast<std::size_t>(T), 0);
  int label = 0;
  std::size_t next = 0;
  out.series.values.row(0) = regimes[0].mu.transpose();
  for (Index t = 1; t < T; ++t) {
    if (next < switches.size() && t == switches[next]) {
      label = (label + 1) % static_cast<int>(regimes.size());
      ++next;
    }
    out.labels[t] = label;
    Vec eps(d);
    for (Index k = 0; k < d; ++k) eps[k] = n(rng);
    out.injected_noise_sq += eps.squaredNorm();
    const auto& th = regimes[label];
    out.series.values.row(t) =
        (th.mu + th.coeffs[0] * out.series.values.row(t - 1).transpose() + eps).transpose();
  }
  out.labels[0] = out.labels[1];
  return out;
}

inline ClusterParams var1(const Mat& a, const Vec& mu) {
  ClusterParams c;
  c.mu = mu;
  c.coeffs = {a};
  c.sigma = Mat::Zero(mu.size(), mu.size());
  return c;
}

}  // namespace clvlab::testing
