#include "clvlab/fembv.hpp"

#include "clvlab/cocycle.hpp"
#include "clvlab/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <string>

namespace clvlab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr int kMaxReseeds = 3;

// Regressor z_t = (1, x_{t-1}, ..., x_{t-m}).
void fill_regressor(const Mat& values, Index t, int m, Eigen::Ref<Vec> z) {
  const Index d = values.cols();
  z[0] = 1.0;
  for (int tau = 1; tau <= m; ++tau) z.segment(1 + (tau - 1) * d, d) = values.row(t - tau).transpose();
}

Index min_samples(int m, Index d) { return (m + 1) * d + 2; }

double sum_loss(const Mat& costs, const std::vector<int>& labels, Index first) {
  double loss = 0.0;
  for (Index t = first; t < costs.rows(); ++t) loss += costs(t, labels[t]);
  return loss;
}

double cluster_loss(const Mat& values, const ClusterParams& theta, const std::vector<int>& labels,
                    int cluster, Index first) {
  double loss = 0.0;
  for (Index t = first; t < values.rows(); ++t) {
    if (labels[t] == cluster) loss += model_distance(values, t, theta);
  }
  return loss;
}

std::vector<double> indicator(const std::vector<int>& labels, int cluster, Index first) {
  std::vector<double> w(labels.size(), 0.0);
  for (std::size_t t = static_cast<std::size_t>(first); t < labels.size(); ++t) {
    w[t] = labels[t] == cluster ? 1.0 : 0.0;
  }
  return w;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Random piecewise-constant labelling with every cluster present. Segment
// count respects the switch budget where possible.
std::vector<int> initial_labels(Index T, Index first, int K, long budget, Index min_len,
                                std::mt19937_64& rng) {
  const Index n = T - first;
  Index segments = std::max<Index>(K, std::min<Index>(budget + 1, n / std::max<Index>(1, 2 * min_len)));
  segments = std::max<Index>(1, std::min<Index>(segments, n));
  std::vector<int> seg_labels(static_cast<std::size_t>(segments));
  for (Index s = 0; s < segments; ++s) {
    seg_labels[s] = s < K ? static_cast<int>(s) : static_cast<int>(rng() % static_cast<std::uint64_t>(K));
  }
  for (Index s = segments - 1; s > 0; --s) {
    const auto j = static_cast<Index>(rng() % static_cast<std::uint64_t>(s + 1));
    std::swap(seg_labels[s], seg_labels[j]);
  }
  // Jittered equal-length boundaries.
  std::vector<Index> bounds(static_cast<std::size_t>(segments + 1));
  const double width = static_cast<double>(n) / static_cast<double>(segments);
  bounds[0] = first;
  bounds[segments] = T;
  for (Index s = 1; s < segments; ++s) {
    const double jitter = (static_cast<double>(rng() % 1000) / 1000.0 - 0.5) * 0.5 * width;
    bounds[s] = first + static_cast<Index>(std::llround(static_cast<double>(s) * width + jitter));
  }
  for (Index s = 1; s <= segments; ++s) bounds[s] = std::max(bounds[s], bounds[s - 1]);

  std::vector<int> labels(static_cast<std::size_t>(T), 0);
  for (Index s = 0; s < segments; ++s) {
    for (Index t = bounds[s]; t < bounds[s + 1]; ++t) labels[t] = seg_labels[s];
  }
  for (Index t = 0; t < first; ++t) labels[t] = labels[first];
  return labels;
}

struct RestartOutcome {
  std::vector<ClusterParams> clusters;
  std::vector<int> labels;
  std::vector<double> trace;
  int reseeds = 0;
  std::optional<std::string> error;
  bool degenerate = false;
};

RestartOutcome run_restart(const TimeSeries& series, const FemBvOptions& opt, long budget,
                           std::uint64_t seed) {
  RestartOutcome out;
  const Mat& x = series.values;
  const Index T = series.length();
  const Index d = series.dim();
  const Index first = opt.m;
  const Index need = min_samples(opt.m, d);
  std::mt19937_64 rng(seed);

  std::vector<int> labels = initial_labels(T, first, opt.K, budget, need, rng);
  std::vector<ClusterParams> theta(static_cast<std::size_t>(opt.K));
  for (int k = 0; k < opt.K; ++k) {
    theta[k] = fit_var_weighted(series, indicator(labels, k, first), opt.m);
  }

  auto counts_of = [&](const std::vector<int>& l) {
    std::vector<Index> c(static_cast<std::size_t>(opt.K), 0);
    for (Index t = first; t < T; ++t) ++c[l[t]];
    return c;
  };

  int reseed_attempts = 0;
  for (int iter = 0; iter < opt.max_iterations; ++iter) {
    // Affiliation half-step: exact DP. The previous labelling is feasible,
    // so the new one never costs more; rounding ties keep the old one.
    Mat costs = cost_matrix(series, theta);
    std::vector<int> next = segment_labels(costs, first, budget);
    double loss = sum_loss(costs, next, first);
    if (iter > 0) {
      const double old = sum_loss(costs, labels, first);
      if (old <= loss) {
        next = labels;
        loss = old;
      }
    }
    labels = std::move(next);

    // Empty clusters are re-seeded from the worst-fitted samples. Adding a
    // model that owns no samples leaves the current labelling feasible, so
    // the DP that follows cannot raise the loss.
    auto counts = counts_of(labels);
    for (int k = 0; k < opt.K; ++k) {
      while (counts[k] == 0) {
        if (reseed_attempts >= kMaxReseeds) {
          out.degenerate = true;
          out.error = "cluster " + std::to_string(k) + " stays empty after " +
                      std::to_string(kMaxReseeds) + " re-seeds";
          return out;
        }
        std::vector<Index> order;
        for (Index t = first; t < T; ++t) order.push_back(t);
        std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
          return costs(a, labels[a]) > costs(b, labels[b]);
        });
        const Index q = std::max<Index>(2 * need, static_cast<Index>(std::llround(opt.p)));
        const Index lo = std::min<Index>(static_cast<Index>(reseed_attempts) * q, static_cast<Index>(order.size()));
        const Index hi = std::min<Index>(lo + q, static_cast<Index>(order.size()));
        ++reseed_attempts;
        ++out.reseeds;
        if (hi - lo < need) continue;
        std::vector<double> w(static_cast<std::size_t>(T), 0.0);
        for (Index r = lo; r < hi; ++r) w[order[r]] = 1.0;
        try {
          theta[k] = fit_var_weighted(series, w, opt.m);
        } catch (const ConditioningError&) {
          continue;
        }
        costs = cost_matrix(series, theta);
        std::vector<int> cand = segment_labels(costs, first, budget);
        const double cand_loss = sum_loss(costs, cand, first);
        if (cand_loss <= loss) {
          labels = std::move(cand);
          loss = cand_loss;
        }
        counts = counts_of(labels);
      }
    }

    const bool converged =
        !out.trace.empty() && out.trace.back() - loss <= opt.tolerance * std::abs(out.trace.back());
    out.trace.push_back(loss);
    if (converged) break;

    // Model half-step, safeguarded per cluster: the loss decomposes over
    // clusters, so keeping any non-improving refit preserves monotonicity.
    counts = counts_of(labels);
    for (int k = 0; k < opt.K; ++k) {
      if (counts[k] < need) continue;
      ClusterParams cand;
      try {
        cand = fit_var_weighted(series, indicator(labels, k, first), opt.m);
      } catch (const ConditioningError&) {
        continue;
      }
      if (cluster_loss(x, cand, labels, k, first) <= cluster_loss(x, theta[k], labels, k, first)) {
        theta[k] = std::move(cand);
      }
    }
  }
  out.clusters = std::move(theta);
  out.labels = std::move(labels);
  return out;
}

}  // namespace

void ClusterParams::validate() const {
  const Index d = mu.size();
  if (d == 0) throw ShapeError("cluster: empty mean");
  if (coeffs.empty()) throw ShapeError("cluster: needs at least one coefficient matrix");
  for (const auto& a : coeffs) {
    if (a.rows() != d || a.cols() != d) throw ShapeError("cluster: coefficient shape mismatch");
  }
  if (sigma.rows() != d || sigma.cols() != d) throw ShapeError("cluster: sigma shape mismatch");
  if ((sigma - sigma.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
    throw ParameterError("cluster: sigma not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Mat> es(sigma, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < -1e-10) throw ParameterError("cluster: sigma not PSD");
}

Vec ClusterParams::predict(const Mat& values, Index t) const {
  Vec pred = mu;
  for (std::size_t tau = 1; tau <= coeffs.size(); ++tau) {
    pred.noalias() += coeffs[tau - 1] * values.row(t - static_cast<Index>(tau)).transpose();
  }
  return pred;
}

Affiliation Affiliation::from_labels(std::span<const int> labels, int K, Index first) {
  if (K < 1) throw ParameterError("affiliation: K must be >= 1");
  const auto T = static_cast<Index>(labels.size());
  if (first < 0 || first >= T) throw ShapeError("affiliation: first modelled row out of range");
  Affiliation a;
  a.first = first;
  a.gamma = Mat::Zero(T, K);
  a.hard_labels.assign(labels.begin(), labels.end());
  for (Index t = 0; t < T; ++t) {
    if (labels[t] < 0 || labels[t] >= K) throw RangeError("affiliation: label out of range");
  }
  for (Index t = 0; t < first; ++t) a.hard_labels[t] = labels[first];
  for (Index t = first; t < T; ++t) a.gamma(t, labels[t]) = 1.0;
  return a;
}

double Affiliation::variation(int cluster) const {
  double tv = 0.0;
  for (Index t = first; t + 1 < gamma.rows(); ++t) tv += std::abs(gamma(t + 1, cluster) - gamma(t, cluster));
  return tv;
}

long Affiliation::switches() const {
  long s = 0;
  for (Index t = first; t + 1 < static_cast<Index>(hard_labels.size()); ++t) {
    s += hard_labels[t + 1] != hard_labels[t];
  }
  return s;
}

void Affiliation::check(long budget) const {
  for (Index t = first; t < gamma.rows(); ++t) {
    if (gamma.row(t).minCoeff() < 0.0) {
      throw Error("affiliation: negative weight at t=" + std::to_string(t));
    }
    if (std::abs(gamma.row(t).sum() - 1.0) > 1e-12) {
      throw Error("affiliation: row " + std::to_string(t) + " does not sum to 1");
    }
  }
  for (int i = 0; i < clusters(); ++i) {
    if (variation(i) > static_cast<double>(budget) + 1e-12) {
      throw Error("affiliation: cluster " + std::to_string(i) + " exceeds the variation budget " +
                  std::to_string(budget));
    }
  }
}

long switch_budget(Index T, double p) {
  if (!(p > 0.0)) throw ParameterError("persistence p must be positive");
  return std::max<long>(0, std::lround(static_cast<double>(T) / p) - 1);
}

double model_distance(const Mat& values, Index t, const ClusterParams& theta) {
  return (values.row(t).transpose() - theta.predict(values, t)).squaredNorm();
}

double model_distance(const Mat& window, const ClusterParams& theta) {
  if (window.rows() != theta.memory() + 1) {
    throw ShapeError("model_distance: window must hold m + 1 observations");
  }
  if (window.cols() != theta.dim()) throw ShapeError("model_distance: dimension mismatch");
  return model_distance(window, window.rows() - 1, theta);
}

Mat cost_matrix(const TimeSeries& series, std::span<const ClusterParams> clusters) {
  const Index T = series.length();
  const auto K = static_cast<Index>(clusters.size());
  if (K == 0) throw ParameterError("cost_matrix: no clusters");
  const int m = clusters[0].memory();
  Mat costs = Mat::Zero(T, K);
  for (Index k = 0; k < K; ++k) {
    if (clusters[k].memory() != m || clusters[k].dim() != series.dim()) {
      throw ShapeError("cost_matrix: cluster shapes disagree with the series");
    }
    for (Index t = m; t < T; ++t) costs(t, k) = model_distance(series.values, t, clusters[k]);
  }
  return costs;
}

double total_loss(const TimeSeries& series, std::span<const ClusterParams> clusters,
                  const Affiliation& gamma) {
  const auto K = static_cast<Index>(clusters.size());
  if (gamma.gamma.rows() != series.length() || gamma.gamma.cols() != K) {
    throw ShapeError("total_loss: gamma is " + std::to_string(gamma.gamma.rows()) + "x" +
                     std::to_string(gamma.gamma.cols()) + ", expected " +
                     std::to_string(series.length()) + "x" + std::to_string(K));
  }
  const int m = clusters.empty() ? 0 : clusters[0].memory();
  for (Index t = m; t < series.length(); ++t) {
    if (std::abs(gamma.gamma.row(t).sum() - 1.0) > 1e-12 || gamma.gamma.row(t).minCoeff() < 0.0) {
      throw ShapeError("total_loss: gamma row " + std::to_string(t) + " is not on the simplex");
    }
  }
  const Mat costs = cost_matrix(series, clusters);
  double loss = 0.0;
  for (Index t = m; t < series.length(); ++t) loss += gamma.gamma.row(t).dot(costs.row(t));
  return loss;
}

ClusterParams fit_var_weighted(const TimeSeries& series, std::span<const double> weights, int m) {
  if (m < 1) throw ParameterError("fit_var_weighted: m must be >= 1");
  const Index T = series.length();
  const Index d = series.dim();
  if (static_cast<Index>(weights.size()) != T) {
    throw ShapeError("fit_var_weighted: weights length " + std::to_string(weights.size()) +
                     " != series length " + std::to_string(T));
  }
  double wsum = 0.0;
  Index effective = 0;
  for (Index t = m; t < T; ++t) {
    if (weights[t] < 0.0 || !std::isfinite(weights[t])) {
      throw ParameterError("fit_var_weighted: weights must be finite and non-negative");
    }
    wsum += weights[t];
    effective += weights[t] > 0.0;
  }
  if (!(wsum > 0.0)) throw ParameterError("fit_var_weighted: total weight is zero");
  if (effective < min_samples(m, d)) {
    throw InsufficientDataError("fit_var_weighted: " + std::to_string(effective) +
                                " weighted samples, need " + std::to_string(min_samples(m, d)));
  }

  const Index q = 1 + m * d;
  Mat Z(effective, q);
  Mat Y(effective, d);
  Vec w(effective);
  Vec z(q);
  Index r = 0;
  for (Index t = m; t < T; ++t) {
    if (weights[t] <= 0.0) continue;
    fill_regressor(series.values, t, m, z);
    Z.row(r) = z.transpose();
    Y.row(r) = series.values.row(t);
    w[r] = weights[t];
    ++r;
  }
  const Vec sw = w.cwiseSqrt();
  const Mat Zw = sw.asDiagonal() * Z;
  Mat G = Zw.transpose() * Zw;
  const Mat H = Zw.transpose() * (sw.asDiagonal() * Y);
  const double ridge = 1e-8 * G.trace() / wsum;
  G.diagonal().array() += ridge;

  Eigen::LDLT<Mat> ldlt(G);
  if (ldlt.info() != Eigen::Success || !(ldlt.rcond() > 1e-15)) {
    throw ConditioningError("fit_var_weighted: normal equations ill-conditioned (rcond " +
                            std::to_string(ldlt.rcond()) + ")");
  }
  const Mat B = ldlt.solve(H);  // rows: mu^T, A_1^T, ..., A_m^T
  if (!B.allFinite()) throw ConditioningError("fit_var_weighted: non-finite solution");

  ClusterParams theta;
  theta.mu = B.row(0).transpose();
  theta.coeffs.resize(static_cast<std::size_t>(m));
  for (int tau = 1; tau <= m; ++tau) {
    theta.coeffs[tau - 1] = B.middleRows(1 + (tau - 1) * d, d).transpose();
  }
  const Mat resid = Y - Z * B;
  theta.sigma = resid.transpose() * w.asDiagonal() * resid / wsum;
  theta.sigma = 0.5 * (theta.sigma + theta.sigma.transpose()).eval();
  return theta;
}

std::vector<int> segment_labels(const Mat& costs, Index first, long budget) {
  if (budget < 0) throw ParameterError("switch budget must be >= 0, got " + std::to_string(budget));
  const Index T = costs.rows();
  const Index K = costs.cols();
  if (K < 1) throw ParameterError("segment_labels: need at least one cluster");
  if (K > 255) throw ParameterError("segment_labels: at most 255 clusters");
  std::vector<int> labels(static_cast<std::size_t>(T), 0);
  if (first >= T) return labels;
  const Index n = T - first;
  const Index S = std::min<Index>(budget, n - 1);
  const Index width = (S + 1) * K;

  std::vector<double> prev(static_cast<std::size_t>(width), kInf);
  std::vector<double> cur(static_cast<std::size_t>(width), kInf);
  // back[(step * (S + 1) + s) * K + k] = label at the previous step.
  std::vector<std::uint8_t> back(static_cast<std::size_t>(n * width), 0);
  for (Index k = 0; k < K; ++k) prev[k] = costs(first, k);

  for (Index step = 1; step < n; ++step) {
    const Index t = first + step;
    std::uint8_t* bk = back.data() + step * width;
    for (Index s = 0; s <= S; ++s) {
      // Best and runner-up over the previous row with one switch fewer.
      double best = kInf, second = kInf;
      Index best_k = -1;
      if (s > 0) {
        const double* row = prev.data() + (s - 1) * K;
        for (Index k = 0; k < K; ++k) {
          if (row[k] < best) {
            second = best;
            best = row[k];
            best_k = k;
          } else if (row[k] < second) {
            second = row[k];
          }
        }
      }
      for (Index k = 0; k < K; ++k) {
        const double stay = prev[s * K + k];
        double sw = kInf;
        Index from = k;
        if (s > 0) {
          if (best_k != k) {
            sw = best;
            from = best_k;
          } else {
            sw = second;
            // Lowest label attaining the runner-up value.
            const double* row = prev.data() + (s - 1) * K;
            for (Index j = 0; j < K; ++j) {
              if (j != k && row[j] == second) {
                from = j;
                break;
              }
            }
          }
        }
        if (stay <= sw) {
          cur[s * K + k] = stay + costs(t, k);
          bk[s * K + k] = static_cast<std::uint8_t>(k);
        } else {
          cur[s * K + k] = sw + costs(t, k);
          bk[s * K + k] = static_cast<std::uint8_t>(from);
        }
      }
    }
    std::swap(prev, cur);
  }

  Index best_s = 0, best_k = 0;
  double best = kInf;
  for (Index s = 0; s <= S; ++s) {
    for (Index k = 0; k < K; ++k) {
      if (prev[s * K + k] < best) {
        best = prev[s * K + k];
        best_s = s;
        best_k = k;
      }
    }
  }
  Index k = best_k, s = best_s;
  for (Index step = n - 1; step >= 0; --step) {
    labels[first + step] = static_cast<int>(k);
    if (step == 0) break;
    const Index from = back[step * width + s * K + k];
    if (from != k) --s;
    k = from;
  }
  for (Index t = 0; t < first; ++t) labels[t] = labels[first];
  return labels;
}

Affiliation optimize_affiliations(const TimeSeries& series, std::span<const ClusterParams> clusters,
                                  long C) {
  if (C < 0) throw ParameterError("optimize_affiliations: C must be >= 0");
  const Mat costs = cost_matrix(series, clusters);
  const int m = clusters[0].memory();
  return Affiliation::from_labels(segment_labels(costs, m, C), static_cast<int>(clusters.size()), m);
}

std::uint64_t restart_seed(std::uint64_t master, int restart) {
  return splitmix64(master ^ splitmix64(static_cast<std::uint64_t>(restart) + 1));
}

FittedModel fit_fembv(const TimeSeries& series, const FemBvOptions& opt) {
  series.validate();
  if (opt.K < 1) throw ParameterError("fit_fembv: K must be >= 1");
  if (opt.m < 1) throw ParameterError("fit_fembv: m must be >= 1");
  if (!(opt.p >= 1.0)) throw ParameterError("fit_fembv: p must be >= 1");
  if (opt.restarts < 1) throw ParameterError("fit_fembv: restarts must be >= 1");
  if (opt.max_iterations < 1) throw ParameterError("fit_fembv: max_iterations must be >= 1");
  const Index T = series.length();
  const Index need = min_samples(opt.m, series.dim());
  if (T - opt.m < static_cast<Index>(opt.K) * need) {
    throw InsufficientDataError("fit_fembv: series too short for K=" + std::to_string(opt.K) +
                                " clusters of VAR(" + std::to_string(opt.m) + ")");
  }
  const long budget = switch_budget(T, opt.p);

  std::vector<RestartOutcome> outcomes(static_cast<std::size_t>(opt.restarts));
  std::vector<std::uint64_t> seeds(outcomes.size());
  for (int r = 0; r < opt.restarts; ++r) seeds[r] = restart_seed(opt.seed, r);

  auto body = [&](int r) {
    try {
      outcomes[r] = run_restart(series, opt, budget, seeds[r]);
    } catch (const Error& e) {
      outcomes[r].error = e.what();
    }
  };
  if (opt.execution == Execution::parallel) {
#pragma omp parallel for schedule(dynamic, 1)
    for (int r = 0; r < opt.restarts; ++r) body(r);
  } else {
    for (int r = 0; r < opt.restarts; ++r) body(r);
  }

  // Deterministic merge: lowest final loss, ties broken by seed.
  int best = -1;
  for (int r = 0; r < opt.restarts; ++r) {
    if (outcomes[r].error) continue;
    if (best < 0) {
      best = r;
      continue;
    }
    const double a = outcomes[r].trace.back(), b = outcomes[best].trace.back();
    if (a < b || (a == b && seeds[r] < seeds[best])) best = r;
  }
  if (best < 0) {
    const bool degenerate = std::all_of(outcomes.begin(), outcomes.end(),
                                        [](const RestartOutcome& o) { return o.degenerate; });
    const std::string msg = "fit_fembv: all restarts failed; first error: " + *outcomes[0].error;
    if (degenerate) throw DegenerateClusteringError(msg);
    throw Error(msg);
  }

  FittedModel model;
  for (const auto& o : outcomes) {
    model.restart_losses.push_back(o.error ? std::numeric_limits<double>::quiet_NaN() : o.trace.back());
  }
  auto& win = outcomes[best];
  model.clusters = std::move(win.clusters);
  model.affiliation = Affiliation::from_labels(win.labels, opt.K, opt.m);
  model.hyper = {opt.K, opt.m, opt.p, budget, T};
  model.loss_trace = std::move(win.trace);
  model.seed = seeds[best];
  model.master_seed = opt.seed;
  model.reseeds = win.reseeds;
  return model;
}

TimeSeries reconstruct(const TimeSeries& series, const FittedModel& model) {
  const int m = model.hyper.m;
  const auto& labels = model.labels();
  if (static_cast<Index>(labels.size()) != series.length()) {
    throw ShapeError("reconstruct: model labels do not match the series length");
  }
  TimeSeries out = series;
  for (Index t = m; t < series.length(); ++t) {
    out.values.row(t) = model.clusters[labels[t]].predict(series.values, t).transpose();
  }
  return out;
}

bool StabilityReport::any_divergent() const {
  return std::any_of(divergent.begin(), divergent.end(), [](bool b) { return b; });
}

StabilityReport stability_report(const FittedModel& model, double threshold) {
  StabilityReport report;
  for (const auto& c : model.clusters) {
    Eigen::EigenSolver<Mat> es(companion_matrix(c), false);
    const double radius = es.eigenvalues().cwiseAbs().maxCoeff();
    report.spectral_radius.push_back(radius);
    report.divergent.push_back(radius > threshold);
  }
  return report;
}

KneeSelection select_knee(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ShapeError("select_knee: x and y lengths differ");
  if (x.size() < 3) throw ParameterError("select_knee: need at least 3 points");
  const auto n = x.size();
  auto normalise = [](std::span<const double> v) {
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    const double span = *hi - *lo;
    std::vector<double> out(v.size(), 0.0);
    if (span > 0.0) {
      for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - *lo) / span;
    }
    return out;
  };
  KneeSelection k;
  k.x_normalized = normalise(x);
  k.y_normalized = normalise(y);
  k.curvature.assign(n, 0.0);
  double best = -1.0;
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const double dx0 = k.x_normalized[i] - k.x_normalized[i - 1];
    const double dx1 = k.x_normalized[i + 1] - k.x_normalized[i];
    if (!(dx0 > 0.0) || !(dx1 > 0.0)) throw ParameterError("select_knee: x must be strictly increasing");
    const double s0 = (k.y_normalized[i] - k.y_normalized[i - 1]) / dx0;
    const double s1 = (k.y_normalized[i + 1] - k.y_normalized[i]) / dx1;
    k.curvature[i] = std::abs(s1 - s0);
    if (k.curvature[i] > best) {
      best = k.curvature[i];
      k.index = static_cast<int>(i);
    }
  }
  k.clear_edge = best >= 1e-3;
  return k;
}

LCurve lcurve_select_p(const TimeSeries& series, const FemBvOptions& base,
                       std::span<const double> p_grid) {
  std::vector<double> grid(p_grid.begin(), p_grid.end());
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  if (grid.size() < 4) throw ParameterError("lcurve: p_grid needs at least 4 distinct values");

  LCurve curve;
  curve.p_values = grid;
  curve.losses.resize(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    FemBvOptions opt = base;
    opt.p = grid[i];
    curve.losses[i] = fit_fembv(series, opt).final_loss();
  }
  for (std::size_t i = 1; i < grid.size(); ++i) {
    // Larger p means fewer allowed switches, so the optimum can only rise.
    if (curve.losses[i] < curve.losses[i - 1]) {
      curve.warnings.push_back("loss decreases from p=" + std::to_string(grid[i - 1]) +
                               " to p=" + std::to_string(grid[i]) + " (restart noise)");
    }
  }
  curve.knee = select_knee(curve.p_values, curve.losses);
  curve.p_star = grid[static_cast<std::size_t>(curve.knee.index)];
  if (!curve.knee.clear_edge) curve.warnings.push_back("no clear edge point");
  return curve;
}

}  // namespace clvlab
