#pragma once

namespace clvlab {

// Kernels that loop over independent work items (time points, restarts,
// grid cells) take an Execution tag. `serial` is the reference path kept for
// testing; both paths produce bit-identical results.
enum class Execution { serial, parallel };

/// Caps the OpenMP worker count; k <= 0 leaves the runtime default.
void set_thread_limit(int k);
int thread_limit();

}  // namespace clvlab
