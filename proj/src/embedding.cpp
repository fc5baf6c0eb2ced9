#include "clvlab/embedding.hpp"

#include "clvlab/error.hpp"

#include <string>

namespace clvlab {

TimeSeries delay_embed(const TimeSeries& series, const EmbeddingSpec& spec) {
  if (spec.delay < 1) throw ParameterError("embedding: delay must be >= 1");
  if (spec.dim < 2) throw ParameterError("embedding: dim must be >= 2");
  if (series.dim() != 1) {
    throw ShapeError("embedding: expected a scalar series, got " + std::to_string(series.dim()) +
                     " columns");
  }
  const long span = (spec.dim - 1) * spec.delay;
  const long length = static_cast<long>(series.length());
  if (length <= span) {
    throw ShapeError("embedding: series of length " + std::to_string(length) +
                     " too short; need at least " + std::to_string(span + 1) + " samples");
  }
  TimeSeries out;
  out.dt = series.dt;
  out.t0 = series.t0;
  const long rows = length - span;
  out.values.resize(rows, spec.dim);
  for (long c = 0; c < spec.dim; ++c) {
    out.values.col(c) = series.values.col(0).segment(c * spec.delay, rows);
  }
  return out;
}

}  // namespace clvlab
