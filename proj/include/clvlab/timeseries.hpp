#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace clvlab {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Uniformly sampled multivariate series. One row per sample.
struct TimeSeries {
  double dt = 1.0;
  double t0 = 0.0;
  Mat values;

  Index length() const { return values.rows(); }
  Index dim() const { return values.cols(); }
  double time(Index k) const { return t0 + static_cast<double>(k) * dt; }

  /// Throws ShapeError / ParameterError unless dt > 0, T >= 2 and every
  /// entry is finite.
  void validate() const;

  /// Single-column view as a new series.
  TimeSeries column(Index c) const;
};

}  // namespace clvlab
