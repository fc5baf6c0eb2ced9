#include "clvlab/analysis.hpp"

#include "clvlab/error.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace clvlab {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Fewer than half the points usable makes an aggregate unreliable.
constexpr double kMinCoverage = 0.5;

}  // namespace

double theta(const Vec& u, const Vec& v) {
  if (u.size() != v.size()) throw ShapeError("theta: vector sizes differ");
  const double nu = u.norm(), nv = v.norm();
  if (!(nu > 0.0) || !(nv > 0.0)) throw ParameterError("theta: zero vector");
  return std::min(1.0, std::abs(u.dot(v)) / (nu * nv));
}

std::size_t AlignmentSeries::valid_count() const {
  std::size_t c = 0;
  for (std::size_t k = 0; k < size(); ++k) c += valid(k);
  return c;
}

double AlignmentSeries::coverage() const {
  return size() == 0 ? 0.0 : static_cast<double>(valid_count()) / static_cast<double>(size());
}

void AlignmentSeries::assign_states(std::span<const int> labels) {
  state.resize(t.size());
  for (std::size_t k = 0; k < t.size(); ++k) {
    if (t[k] >= labels.size()) {
      throw RangeError("alignment: no state label for t=" + std::to_string(t[k]));
    }
    state[k] = labels[t[k]];
  }
}

AlignmentSeries alignment_series(std::span<const ClvResult> clvs, int i, int j, NeutralRule rule) {
  AlignmentSeries out;
  out.t.reserve(clvs.size());
  out.theta.reserve(clvs.size());
  for (const auto& r : clvs) {
    out.t.push_back(r.t);
    if (!r.ok) {
      out.theta.push_back(kNaN);
      continue;
    }
    const int jj = j < 0 ? near_neutral_index(r, rule) : j;
    if (i < 0 || i >= r.vectors.cols() || jj >= r.vectors.cols()) {
      throw RangeError("alignment_series: CLV index out of range");
    }
    out.theta.push_back(theta(r.vectors.col(i), r.vectors.col(jj)));
  }
  out.state.assign(out.t.size(), -1);
  return out;
}

Wing wing_label(const Vec& state) {
  if (state.size() < 1) throw ShapeError("wing_label: empty state");
  return state[0] < 0.0 ? Wing::left : Wing::right;
}

std::vector<int> wing_labels(const TimeSeries& traj) {
  std::vector<int> labels(static_cast<std::size_t>(traj.length()));
  for (Index k = 0; k < traj.length(); ++k) labels[k] = wing_label(traj.values.row(k).transpose());
  return labels;
}

StateMeans delta_state_means(const AlignmentSeries& series, int state_a, int state_b,
                             long exclude_window) {
  if (series.state.size() != series.size()) throw ShapeError("delta_state_means: states not assigned");
  const std::size_t n = series.size();
  std::vector<bool> excluded(n, false);
  if (exclude_window > 0) {
    const auto w = static_cast<std::size_t>(exclude_window);
    for (std::size_t k = 0; k + 1 < n; ++k) {
      if (series.state[k] == series.state[k + 1]) continue;
      const std::size_t sw = series.t[k + 1];
      const std::size_t lo = sw > w ? sw - w : 0;
      const std::size_t hi = sw + w;
      for (std::size_t q = 0; q < n; ++q) {
        if (series.t[q] >= lo && series.t[q] <= hi) excluded[q] = true;
      }
    }
  }
  StateMeans out;
  double sum_a = 0.0, sum_b = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    if (!series.valid(k) || excluded[k]) continue;
    if (series.state[k] == state_a) {
      sum_a += series.theta[k];
      ++out.count_a;
    } else if (series.state[k] == state_b) {
      sum_b += series.theta[k];
      ++out.count_b;
    }
  }
  if (out.count_a == 0 || out.count_b == 0) {
    throw InsufficientDataError("delta_state_means: state " +
                                std::to_string(out.count_a == 0 ? state_a : state_b) +
                                " has no usable points");
  }
  out.mean_a = sum_a / static_cast<double>(out.count_a);
  out.mean_b = sum_b / static_cast<double>(out.count_b);
  out.delta = out.mean_a - out.mean_b;
  out.coverage = series.coverage();
  out.valid = out.coverage >= kMinCoverage;
  return out;
}

double total_variation(const AlignmentSeries& series) {
  double tv = 0.0;
  bool have_prev = false;
  double prev = 0.0;
  std::size_t used = 0;
  for (std::size_t k = 0; k < series.size(); ++k) {
    if (!series.valid(k)) continue;
    if (have_prev) tv += std::abs(series.theta[k] - prev);
    prev = series.theta[k];
    have_prev = true;
    ++used;
  }
  if (used < 2) throw InsufficientDataError("total_variation: need at least 2 valid points");
  return tv;
}

namespace {

template <typename TangentFn>
AlignmentSeries tangent_alignment(std::span<const ClvResult> clvs, int j, TangentFn&& tangent) {
  AlignmentSeries out;
  for (const auto& r : clvs) {
    out.t.push_back(r.t);
    double value = kNaN;
    if (r.ok) {
      if (j < 0 || j >= r.vectors.cols()) throw RangeError("flow_alignment: CLV index out of range");
      Vec f;
      if (tangent(r.t, f) && f.norm() >= 1e-12) value = theta(f, r.vectors.col(j));
    }
    out.theta.push_back(value);
  }
  out.state.assign(out.t.size(), -1);
  return out;
}

}  // namespace

AlignmentSeries flow_alignment(const TimeSeries& traj, const OdeModel& model,
                               std::span<const ClvResult> clvs, int j) {
  if (traj.dim() != model.dim) throw ShapeError("flow_alignment: trajectory dimension mismatch");
  return tangent_alignment(clvs, j, [&](std::size_t t, Vec& f) {
    if (static_cast<Index>(t) >= traj.length()) return false;
    f = model.vector_field(traj.values.row(static_cast<Index>(t)).transpose());
    return true;
  });
}

AlignmentSeries surrogate_flow_alignment(const TimeSeries& series, int m,
                                         std::span<const ClvResult> clvs, int j) {
  if (m < 1) throw ParameterError("surrogate_flow_alignment: m must be >= 1");
  const Index d = series.dim();
  auto out = tangent_alignment(clvs, j, [&](std::size_t t, Vec& f) {
    const auto ti = static_cast<Index>(t);
    if (ti + 1 >= series.length() || ti - m + 1 < 0) return false;
    f.resize(d * m);
    for (int lag = 0; lag < m; ++lag) {
      f.segment(lag * d, d) =
          (series.values.row(ti + 1 - lag) - series.values.row(ti - lag)).transpose();
    }
    return true;
  });
  out.surrogate_tangent = true;
  return out;
}

double mean_valid(std::span<const double> values) {
  double s = 0.0;
  std::size_t n = 0;
  for (double v : values) {
    if (std::isfinite(v)) {
      s += v;
      ++n;
    }
  }
  return n == 0 ? kNaN : s / static_cast<double>(n);
}

GridSearchReport gridsearch(const CocycleSource& source, const TimeRange& t_range,
                            std::span<const long> N_values, std::span<const long> n_values,
                            const GridMetricSpec& metrics, Execution execution) {
  if (N_values.empty() || n_values.empty()) throw ParameterError("gridsearch: empty grid");
  if (t_range.count() == 0) throw ParameterError("gridsearch: empty time range");
  if (metrics.delta && metrics.states.empty()) {
    throw ParameterError("gridsearch: delta requested without state labels");
  }
  const auto rows = static_cast<Index>(N_values.size());
  const auto cols = static_cast<Index>(n_values.size());
  GridSearchReport rep;
  rep.N_values.assign(N_values.begin(), N_values.end());
  rep.n_values.assign(n_values.begin(), n_values.end());
  rep.delta = Mat::Constant(rows, cols, kNaN);
  rep.tv = Mat::Constant(rows, cols, kNaN);
  rep.coverage = Mat::Zero(rows, cols);
  rep.failures = Eigen::MatrixXi::Zero(rows, cols);
  std::vector<std::string> messages(static_cast<std::size_t>(rows * cols));

  auto cell = [&](Index r, Index c) {
    try {
      const auto params = ClvParams::symmetric(N_values[r], n_values[c]);
      const auto clvs = clv_series(source, t_range, params, Execution::serial);
      auto series = alignment_series(clvs, metrics.i, metrics.j);
      rep.coverage(r, c) = series.coverage();
      if (series.coverage() < kMinCoverage) {
        throw InsufficientDataError("coverage " + std::to_string(series.coverage()));
      }
      if (metrics.delta) {
        series.assign_states(metrics.states);
        rep.delta(r, c) = delta_state_means(series, metrics.state_a, metrics.state_b,
                                            metrics.exclude_window).delta;
      }
      if (metrics.tv) rep.tv(r, c) = total_variation(series);
    } catch (const Error& e) {
      rep.failures(r, c) = 1;
      messages[static_cast<std::size_t>(r * cols + c)] =
          "N=" + std::to_string(N_values[r]) + " n=" + std::to_string(n_values[c]) + ": " + e.what();
    }
  };

  const Index cells = rows * cols;
  if (execution == Execution::parallel) {
#pragma omp parallel for schedule(dynamic, 1)
    for (Index k = 0; k < cells; ++k) cell(k / cols, k % cols);
  } else {
    for (Index k = 0; k < cells; ++k) cell(k / cols, k % cols);
  }
  for (auto& m : messages) {
    if (!m.empty()) rep.messages.push_back(std::move(m));
  }
  if (rep.failures.sum() == cells) {
    throw InsufficientDataError("gridsearch: every cell failed; first: " + rep.messages.front());
  }
  return rep;
}

}  // namespace clvlab
