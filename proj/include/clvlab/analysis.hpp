#pragma once

#include "clvlab/clv.hpp"
#include "clvlab/dynsys.hpp"
#include "clvlab/parallel.hpp"

#include <cmath>
#include <span>
#include <string>
#include <vector>

namespace clvlab {

/// |u . v| / (|u| |v|). Throws ParameterError for a zero vector.
double theta(const Vec& u, const Vec& v);

/// Per-point alignment values. Missing points hold NaN; unknown states -1.
struct AlignmentSeries {
  std::vector<std::size_t> t;
  std::vector<double> theta;
  std::vector<int> state;
  std::vector<double> flow_theta;  // optional, same length as theta when set
  bool surrogate_tangent = false;

  std::size_t size() const { return t.size(); }
  bool valid(std::size_t k) const { return std::isfinite(theta[k]); }
  std::size_t valid_count() const;
  double coverage() const;

  /// state[k] = labels[t[k]]; throws RangeError if a time is not covered.
  void assign_states(std::span<const int> labels);
};

/// theta_ij(t) for every point (0-based column indices). j < 0 selects the
/// near-neutral column per `rule`.
AlignmentSeries alignment_series(std::span<const ClvResult> clvs, int i = 0, int j = -1,
                                 NeutralRule rule = NeutralRule::second);

enum Wing : int { left = 0, right = 1 };

/// Lorenz wing: left for x < 0, right otherwise.
Wing wing_label(const Vec& state);
std::vector<int> wing_labels(const TimeSeries& traj);

struct StateMeans {
  double delta = 0.0;  // mean(theta | a) - mean(theta | b)
  double mean_a = 0.0;
  double mean_b = 0.0;
  std::size_t count_a = 0;
  std::size_t count_b = 0;
  double coverage = 0.0;  // valid points / all points
  bool valid = false;     // coverage >= 0.5
};

/// Difference of state-conditioned means. Points within `exclude_window`
/// time steps of a state change are dropped (0 disables). Throws
/// InsufficientDataError when either state has no usable point.
StateMeans delta_state_means(const AlignmentSeries& series, int state_a, int state_b,
                             long exclude_window = 10);

/// sum |theta(k+1) - theta(k)| over consecutive valid points.
double total_variation(const AlignmentSeries& series);

/// theta(f(x(t)), phi_j(t)) using the model's vector field as tangent.
AlignmentSeries flow_alignment(const TimeSeries& traj, const OdeModel& model,
                               std::span<const ClvResult> clvs, int j);

/// Same diagnostic for a VAR(m) companion source: the tangent surrogate at
/// t is the stacked forward difference (x_{t+1}-x_t, ..., x_{t-m+2}-x_{t-m+1}).
AlignmentSeries surrogate_flow_alignment(const TimeSeries& series, int m,
                                         std::span<const ClvResult> clvs, int j);

double mean_valid(std::span<const double> values);

struct GridMetricSpec {
  bool delta = true;
  bool tv = true;
  std::vector<int> states;  // state per time index (needed for delta)
  int state_a = 0;
  int state_b = 1;
  long exclude_window = 10;
  int i = 0;
  int j = -1;
};

struct GridSearchReport {
  std::vector<long> N_values;
  std::vector<long> n_values;
  Mat delta;     // NaN where not computed
  Mat tv;
  Mat coverage;
  Eigen::MatrixXi failures;  // 1 = cell failed
  std::vector<std::string> messages;
};

/// Runs clv_series + metrics for each (N = M, n) cell. Failed cells are
/// flagged; InsufficientDataError is thrown only when every cell fails.
GridSearchReport gridsearch(const CocycleSource& source, const TimeRange& t_range,
                            std::span<const long> N_values, std::span<const long> n_values,
                            const GridMetricSpec& metrics,
                            Execution execution = Execution::parallel);

}  // namespace clvlab
