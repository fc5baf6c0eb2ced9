#pragma once

#include "clvlab/cocycle.hpp"
#include "clvlab/parallel.hpp"

#include <string>
#include <vector>

namespace clvlab {

/// N past steps, M future steps, n correction (push-forward) steps.
struct ClvParams {
  long past = 10;
  long future = 10;
  long correction = 3;

  static ClvParams symmetric(long N, long n) { return {N, N, n}; }
  void validate() const;
};

/// CLVs at one time index. Column j of `vectors` is phi_{j+1}, ordered by
/// filtration index (decreasing asymptotic growth); `ftle` holds the
/// finite-time growth rate of each column over the M future steps, in the
/// source's time unit. A failed point has ok = false and empty matrices.
struct ClvResult {
  std::size_t t = 0;
  bool ok = false;
  std::string error;
  Mat vectors;
  Vec ftle;
  Mat angles;  // |cos| between columns; symmetric, unit diagonal
  bool multiplicity_warning = false;
};

struct TimeRange {
  std::size_t begin = 0;
  std::size_t end = 0;  // exclusive
  std::size_t stride = 1;

  std::size_t count() const { return end > begin ? (end - begin + stride - 1) / stride : 0; }
};

/// First and one-past-last time index at which clv_at has enough past and
/// future steps.
TimeRange clv_coverage(const CocycleSource& source, const ClvParams& params);

/// Benettin QR spectrum: log_growth / (n_steps * dt) with an identity seed.
Vec le_spectrum_qr(const CocycleSource& source, std::size_t t_start, std::size_t n_steps);

inline constexpr double kIntersectionTolerance = 1e-6;

/// Finite-time CLVs at time t:
///  1. SVD of F(t-n-N, t-n): left singular vectors give the past filtration.
///  2. The nested past subspaces are pushed n steps forward to t.
///  3. SVD of F(t, t+M): right singular vectors give the future filtration.
///  4. phi_j spans the intersection of the j-dimensional pushed subspace and
///     the span of the last d-j+1 right singular vectors.
///  5. ftle_j is the growth of phi_j over the M future steps away from the
///     faster directions, per unit time. It matches log ||F phi_j|| / (M dt)
///     up to a boundary term and stays accurate for contracting columns.
/// Each vector has its first non-negligible component positive.
ClvResult clv_at(const CocycleSource& source, std::size_t t, const ClvParams& params);

/// clv_at over a time range. Failures are recorded per point (ok = false)
/// instead of propagating.
std::vector<ClvResult> clv_series(const CocycleSource& source, const TimeRange& range,
                                  const ClvParams& params,
                                  Execution execution = Execution::parallel);

enum class NeutralRule {
  second,           // second column (d >= 2)
  smallest_ftle,    // argmin |ftle_j|
};

int near_neutral_index(const ClvResult& result, NeutralRule rule = NeutralRule::second);

}  // namespace clvlab
