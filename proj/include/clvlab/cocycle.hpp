#pragma once

#include "clvlab/dynsys.hpp"
#include "clvlab/fembv.hpp"
#include "clvlab/timeseries.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace clvlab {

enum class CocycleKind { analytic, var_companion, sequence };

/// Immutable sequence of one-step tangent maps: step(t) carries tangent
/// vectors at sample t to sample t + 1, for t in [0, length()).
///
/// Matrices are stored once and addressed through a per-step index so a
/// piecewise-constant cocycle (VAR companion, constant test sources) does
/// not duplicate storage.
class CocycleSource {
 public:
  CocycleSource(CocycleKind kind, std::vector<Mat> maps, std::vector<std::uint32_t> index,
                double dt);

  /// A fixed matrix repeated `length` times.
  static CocycleSource constant(const Mat& step, std::size_t length, double dt = 1.0);

  /// One matrix per step, in order.
  static CocycleSource from_sequence(std::vector<Mat> steps, double dt = 1.0);

  CocycleKind kind() const { return kind_; }
  Index dim() const { return dim_; }
  std::size_t length() const { return index_.size(); }

  /// Time per step used to convert growth rates. Analytic sources report
  /// rates per unit time; VAR sources have dt = 1 (rates per step).
  double dt() const { return dt_; }
  std::string time_unit() const { return kind_ == CocycleKind::var_companion ? "step" : "time"; }

  /// Throws RangeError for t outside [0, length()).
  const Mat& step(std::size_t t) const;

  /// The step matrices are never touched after construction.
  const std::vector<Mat>& maps() const { return maps_; }
  const std::vector<std::uint32_t>& map_index() const { return index_; }

  /// The same steps traversed backwards with inverted maps.
  CocycleSource reversed() const;

 private:
  CocycleKind kind_;
  std::vector<Mat> maps_;
  std::vector<std::uint32_t> index_;
  Index dim_ = 0;
  double dt_ = 1.0;
};

/// Block companion matrix of a VAR(m): top block row [A_1 ... A_m],
/// identity blocks on the sub-diagonal. The affine term mu does not enter.
Mat companion_matrix(const ClusterParams& theta);

/// step(t) = companion_matrix(theta_{label(t + 1)}) for t in [0, T - 1).
/// The tangent state at t is (x_t, x_{t-1}, ..., x_{t-m+1}). `series` must
/// be the series the model was fitted on (same length).
CocycleSource var_cocycle(const FittedModel& model, const TimeSeries& series);

/// step(t) = tangent_propagator(model, x(t), traj.dt) for t in [0, T - 1).
CocycleSource analytic_cocycle(const OdeModel& model, const TimeSeries& traj,
                               Execution execution = Execution::parallel);

/// Overflow-safe product F(t_start, t_start + n) applied to an orthonormal
/// seed: F * seed = Q * R with Q orthonormal and R upper triangular.
/// R is stored scaled by exp(-log_scale) so its entries stay representable.
struct StabilizedProduct {
  Mat Q;
  Vec log_growth;  // sum over steps of log |R_jj|
  Mat R;
  double log_scale = 0.0;
};

/// QR (Householder) re-orthonormalisation after every step. Throws
/// DegeneracyError when a diagonal entry of a step factor falls below
/// 1e-300 in magnitude.
StabilizedProduct stabilized_product(const CocycleSource& source, std::size_t t_start,
                                     std::size_t n_steps, const Mat& seed_basis);

/// Same factorisation for the adjoint F(t_start, t_start + n)^T, built from
/// the transposed steps in reverse order. Its leading left singular vectors
/// are the leading right singular vectors of F, obtained without the loss
/// of accuracy an SVD of the ill-conditioned forward factor would incur.
StabilizedProduct stabilized_adjoint_product(const CocycleSource& source, std::size_t t_start,
                                             std::size_t n_steps, const Mat& seed_basis);

/// Pushes an orthonormal basis forward without accumulating R. Cheaper
/// form used when only the propagated nested subspaces are needed.
Mat push_forward(const CocycleSource& source, std::size_t t_start, std::size_t n_steps,
                 const Mat& seed_basis);

/// Companion matrices serialised for debugging.
std::string companion_matrices_to_json(const FittedModel& model);

}  // namespace clvlab
