#pragma once

#include "clvlab/timeseries.hpp"

namespace clvlab {

struct EmbeddingSpec {
  long delay = 500;  // samples
  long dim = 3;
};

/// Row k of the result is (s_k, s_{k+delay}, ..., s_{k+(dim-1) delay}).
/// `series` must have a single column.
TimeSeries delay_embed(const TimeSeries& series, const EmbeddingSpec& spec);

}  // namespace clvlab
