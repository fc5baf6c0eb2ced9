#include "clvlab/timeseries.hpp"

#include "clvlab/error.hpp"

#include <cmath>
#include <string>

namespace clvlab {

void TimeSeries::validate() const {
  if (!(dt > 0.0) || !std::isfinite(dt)) {
    throw ParameterError("time series: dt must be positive and finite, got " +
                         std::to_string(dt));
  }
  if (values.rows() < 2) {
    throw ShapeError("time series: need at least 2 samples, got " +
                     std::to_string(values.rows()));
  }
  if (values.cols() < 1) {
    throw ShapeError("time series: need at least one column");
  }
  if (!values.allFinite()) {
    for (Index r = 0; r < values.rows(); ++r) {
      if (!values.row(r).allFinite()) {
        throw ParameterError("time series: non-finite value at row " + std::to_string(r));
      }
    }
  }
}

TimeSeries TimeSeries::column(Index c) const {
  if (c < 0 || c >= dim()) {
    throw RangeError("time series: column " + std::to_string(c) + " out of range [0, " +
                     std::to_string(dim()) + ")");
  }
  TimeSeries out;
  out.dt = dt;
  out.t0 = t0;
  out.values = values.col(c);
  return out;
}

}  // namespace clvlab
