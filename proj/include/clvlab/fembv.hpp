#pragma once

#include "clvlab/parallel.hpp"
#include "clvlab/timeseries.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace clvlab {

/// One locally stationary VAR(m) regime:
///   x_t = mu + sum_{tau=1..m} A_tau x_{t-tau} + noise,  noise ~ (0, sigma).
struct ClusterParams {
  Vec mu;
  std::vector<Mat> coeffs;  // A_1 .. A_m
  Mat sigma;

  Index dim() const { return mu.size(); }
  int memory() const { return static_cast<int>(coeffs.size()); }

  /// Shapes agree, sigma symmetric (1e-12) and PSD (eigenvalues >= -1e-10).
  void validate() const;

  /// Deterministic one-step prediction for row t of `values` (needs t >= m).
  Vec predict(const Mat& values, Index t) const;
};

/// Per-time cluster weights. Rows before the first modelled step (t < m)
/// carry zero weight; every later row is a vertex of the simplex.
struct Affiliation {
  Mat gamma;                     // T x K
  std::vector<int> hard_labels;  // length T; entries for t < m copy row m
  Index first = 0;

  int clusters() const { return static_cast<int>(gamma.cols()); }

  static Affiliation from_labels(std::span<const int> labels, int K, Index first);

  /// sum_t |gamma_i(t+1) - gamma_i(t)| over the modelled rows.
  double variation(int cluster) const;
  long switches() const;

  /// Throws Error unless every modelled row sums to 1 (1e-12) with
  /// non-negative entries and each cluster's variation is <= budget.
  void check(long budget) const;
};

struct FemBvHyper {
  int K = 2;
  int m = 1;
  double p = 1.0;
  long C = 0;  // round(T / p) - 1
  Index T = 0;
};

/// round(T / p) - 1, clamped at 0.
long switch_budget(Index T, double p);

struct FittedModel {
  std::vector<ClusterParams> clusters;
  Affiliation affiliation;
  FemBvHyper hyper;
  std::vector<double> loss_trace;
  std::uint64_t seed = 0;  // seed of the winning restart
  std::uint64_t master_seed = 0;
  std::vector<double> restart_losses;  // final loss per restart, NaN if it failed
  int reseeds = 0;

  double final_loss() const { return loss_trace.empty() ? 0.0 : loss_trace.back(); }
  const std::vector<int>& labels() const { return affiliation.hard_labels; }
};

/// Squared residual ||x_t - mu - sum A_tau x_{t-tau}||^2 for row t of
/// `values` (t >= m).
double model_distance(const Mat& values, Index t, const ClusterParams& theta);

/// Same quantity for an explicit window: rows ordered oldest first, the
/// last row is x_t, and the window has exactly m + 1 rows.
double model_distance(const Mat& window, const ClusterParams& theta);

/// T x K matrix of model_distance values; rows t < m are zero.
Mat cost_matrix(const TimeSeries& series, std::span<const ClusterParams> clusters);

/// L = sum_t sum_i gamma_i(t) g(x_t, theta_i). gamma must be T x K with
/// simplex rows from t = m on.
double total_loss(const TimeSeries& series, std::span<const ClusterParams> clusters,
                  const Affiliation& gamma);

/// Weighted least squares for (mu, A_1..A_m) with a ridge floor
/// 1e-8 trace(Z^T W Z) / sum(w); sigma is the weighted residual covariance.
ClusterParams fit_var_weighted(const TimeSeries& series, std::span<const double> weights, int m);

/// Exact minimiser of sum_t costs(t, label_t) over label sequences on rows
/// [first, T) with at most `budget` switches. Ties prefer staying, then the
/// lower label. Rows before `first` copy the label at `first`.
std::vector<int> segment_labels(const Mat& costs, Index first, long budget);

/// Hard affiliation minimising the loss for fixed cluster models under the
/// switch budget C (each switch adds 1 to the variation of the two clusters
/// involved, so the per-cluster bound sum_t |dgamma_i| <= C holds).
Affiliation optimize_affiliations(const TimeSeries& series,
                                  std::span<const ClusterParams> clusters, long C);

struct FemBvOptions {
  int K = 2;
  int m = 1;
  double p = 100.0;
  int restarts = 10;
  std::uint64_t seed = 0;
  int max_iterations = 100;
  double tolerance = 1e-8;  // relative loss decrease
  Execution execution = Execution::parallel;
};

/// Best-of-restarts alternating minimisation. Each restart starts from a
/// random piecewise-constant labelling and alternates weighted VAR fits
/// with the exact affiliation DP; its loss trace is non-increasing.
FittedModel fit_fembv(const TimeSeries& series, const FemBvOptions& options);

/// Seed of restart r derived from a master seed.
std::uint64_t restart_seed(std::uint64_t master, int restart);

/// One-step-ahead predictions using the observed history and the hard
/// label at each step. Rows t < m are copied from the data.
TimeSeries reconstruct(const TimeSeries& series, const FittedModel& model);

/// Spectral radius of each cluster's companion matrix and whether it
/// exceeds `threshold` (reconstructions may diverge).
struct StabilityReport {
  std::vector<double> spectral_radius;
  std::vector<bool> divergent;
  bool any_divergent() const;
};
StabilityReport stability_report(const FittedModel& model, double threshold = 1.05);

struct KneeSelection {
  std::vector<double> x_normalized;
  std::vector<double> y_normalized;
  std::vector<double> curvature;  // 0 at the end points
  int index = -1;
  bool clear_edge = false;
};

/// Point of maximal discrete curvature on a min-max normalised curve.
/// Curvature at interior points is the absolute change of slope between
/// neighbouring segments; below 1e-3 the curve has no clear edge point.
KneeSelection select_knee(std::span<const double> x, std::span<const double> y);

struct LCurve {
  std::vector<double> p_values;
  std::vector<double> losses;
  KneeSelection knee;
  double p_star = 0.0;
  std::vector<std::string> warnings;
};

/// Fits one model per persistence value and selects p at the L-curve edge.
LCurve lcurve_select_p(const TimeSeries& series, const FemBvOptions& base,
                       std::span<const double> p_grid);

/// JSON document with format_version, hyper-parameters, per-cluster
/// mu / A_tau / sigma (row-major), hard labels, loss trace and seed.
std::string fitted_model_to_json(const FittedModel& model);
FittedModel fitted_model_from_json(std::string_view text);

inline constexpr int kModelFormatVersion = 1;

}  // namespace clvlab
