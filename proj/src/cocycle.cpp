#include "clvlab/cocycle.hpp"

#include "clvlab/error.hpp"

#include "json.hpp"

#include <cmath>
#include <string>

namespace clvlab {

namespace {

constexpr double kCollapse = 1e-300;

// One Householder re-orthonormalisation: Z = Q R with diag(R) >= 0.
// Returns false on rank collapse.
bool orthonormalize(const Mat& Z, Eigen::HouseholderQR<Mat>& qr, Mat& Q, Mat& R) {
  const Index d = Z.rows();
  const Index k = Z.cols();
  qr.compute(Z);
  Q.setIdentity(d, k);
  Q.applyOnTheLeft(qr.householderQ());
  R = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
  for (Index j = 0; j < k; ++j) {
    if (R(j, j) < 0.0) {
      R.row(j) *= -1.0;
      Q.col(j) *= -1.0;
    }
    if (!(R(j, j) >= kCollapse)) return false;
  }
  return true;
}

void check_span(const CocycleSource& source, std::size_t t_start, std::size_t n_steps) {
  if (n_steps < 1) throw ParameterError("cocycle product: n_steps must be >= 1");
  if (t_start + n_steps > source.length()) {
    throw RangeError("cocycle product: steps [" + std::to_string(t_start) + ", " +
                     std::to_string(t_start + n_steps) + ") exceed source length " +
                     std::to_string(source.length()));
  }
}

void check_seed(const CocycleSource& source, const Mat& seed) {
  if (seed.rows() != source.dim() || seed.cols() < 1 || seed.cols() > source.dim()) {
    throw ShapeError("cocycle product: seed basis must be " + std::to_string(source.dim()) +
                     " x k with 1 <= k <= dim");
  }
}

}  // namespace

CocycleSource::CocycleSource(CocycleKind kind, std::vector<Mat> maps,
                             std::vector<std::uint32_t> index, double dt)
    : kind_(kind), maps_(std::move(maps)), index_(std::move(index)), dt_(dt) {
  if (maps_.empty()) throw ParameterError("cocycle: no step matrices");
  if (!(dt_ > 0.0)) throw ParameterError("cocycle: dt must be positive");
  dim_ = maps_[0].rows();
  for (const auto& m : maps_) {
    if (m.rows() != dim_ || m.cols() != dim_) throw ShapeError("cocycle: step matrices must be square and equal-sized");
    if (!m.allFinite()) throw ParameterError("cocycle: non-finite step matrix");
  }
  for (auto i : index_) {
    if (i >= maps_.size()) throw RangeError("cocycle: step index out of range");
  }
}

CocycleSource CocycleSource::constant(const Mat& step, std::size_t length, double dt) {
  return CocycleSource(CocycleKind::sequence, {step}, std::vector<std::uint32_t>(length, 0), dt);
}

CocycleSource CocycleSource::from_sequence(std::vector<Mat> steps, double dt) {
  std::vector<std::uint32_t> index(steps.size());
  for (std::size_t i = 0; i < index.size(); ++i) index[i] = static_cast<std::uint32_t>(i);
  return CocycleSource(CocycleKind::sequence, std::move(steps), std::move(index), dt);
}

const Mat& CocycleSource::step(std::size_t t) const {
  if (t >= index_.size()) {
    throw RangeError("cocycle: step " + std::to_string(t) + " outside [0, " +
                     std::to_string(index_.size()) + ")");
  }
  return maps_[index_[t]];
}

CocycleSource CocycleSource::reversed() const {
  std::vector<Mat> inv;
  inv.reserve(maps_.size());
  for (const auto& m : maps_) {
    Eigen::FullPivLU<Mat> lu(m);
    if (!lu.isInvertible()) throw DegeneracyError("cocycle: step matrix not invertible");
    inv.push_back(lu.inverse());
  }
  std::vector<std::uint32_t> idx(index_.rbegin(), index_.rend());
  return CocycleSource(kind_, std::move(inv), std::move(idx), dt_);
}

Mat companion_matrix(const ClusterParams& theta) {
  const Index d = theta.dim();
  const int m = theta.memory();
  if (m < 1) throw ShapeError("companion_matrix: no coefficient matrices");
  Mat a = Mat::Zero(d * m, d * m);
  for (int tau = 0; tau < m; ++tau) a.block(0, tau * d, d, d) = theta.coeffs[tau];
  if (m > 1) a.block(d, 0, d * (m - 1), d * (m - 1)).setIdentity();
  return a;
}

CocycleSource var_cocycle(const FittedModel& model, const TimeSeries& series) {
  const auto& labels = model.labels();
  if (static_cast<Index>(labels.size()) != series.length()) {
    throw ShapeError("var_cocycle: model has " + std::to_string(labels.size()) +
                     " labels but the series has " + std::to_string(series.length()) + " samples");
  }
  if (labels.size() < 2) throw ShapeError("var_cocycle: need at least 2 samples");
  std::vector<Mat> maps;
  for (const auto& c : model.clusters) maps.push_back(companion_matrix(c));
  std::vector<std::uint32_t> index(labels.size() - 1);
  for (std::size_t t = 0; t + 1 < labels.size(); ++t) index[t] = static_cast<std::uint32_t>(labels[t + 1]);
  return CocycleSource(CocycleKind::var_companion, std::move(maps), std::move(index), 1.0);
}

CocycleSource analytic_cocycle(const OdeModel& model, const TimeSeries& traj, Execution execution) {
  traj.validate();
  if (traj.dim() != model.dim) throw ShapeError("analytic_cocycle: trajectory dimension mismatch");
  const Index steps = traj.length() - 1;
  std::vector<Mat> maps(static_cast<std::size_t>(steps));
  std::vector<std::string> errors(maps.size());
  auto body = [&](Index t) {
    try {
      maps[t] = tangent_propagator(model, traj.values.row(t).transpose(), traj.dt);
    } catch (const IntegrationError& e) {
      errors[t] = "t=" + std::to_string(traj.time(t)) + ": " + e.what();
    }
  };
  if (execution == Execution::parallel) {
#pragma omp parallel for schedule(static)
    for (Index t = 0; t < steps; ++t) body(t);
  } else {
    for (Index t = 0; t < steps; ++t) body(t);
  }
  for (const auto& e : errors) {
    if (!e.empty()) throw IntegrationError("analytic_cocycle: " + e);
  }
  std::vector<std::uint32_t> index(maps.size());
  for (std::size_t t = 0; t < index.size(); ++t) index[t] = static_cast<std::uint32_t>(t);
  return CocycleSource(CocycleKind::analytic, std::move(maps), std::move(index), traj.dt);
}

namespace {

// Shared accumulation loop; `map(s)` returns the matrix applied at step s.
template <class StepMap>
StabilizedProduct accumulate(const CocycleSource& source, std::size_t n_steps, const Mat& seed_basis,
                             StepMap map, std::size_t t_label) {
  const Index d = source.dim();
  const Index k = seed_basis.cols();
  StabilizedProduct out;
  out.Q = seed_basis;
  out.R = Mat::Identity(k, k);
  out.log_growth = Vec::Zero(k);
  Eigen::HouseholderQR<Mat> qr(d, k);
  Mat Z(d, k), Rstep(k, k);
  for (std::size_t s = 0; s < n_steps; ++s) {
    Z.noalias() = map(s) * out.Q;
    if (!orthonormalize(Z, qr, out.Q, Rstep)) {
      throw DegeneracyError("stabilized_product: rank collapse at step " + std::to_string(t_label + s));
    }
    out.log_growth.array() += Rstep.diagonal().array().log();
    out.R = (Rstep.triangularView<Eigen::Upper>() * out.R).eval();
    const double big = out.R.cwiseAbs().maxCoeff();
    if (big > 1e100 || big < 1e-100) {
      out.R /= big;
      out.log_scale += std::log(big);
    }
  }
  return out;
}

}  // namespace

StabilizedProduct stabilized_product(const CocycleSource& source, std::size_t t_start,
                                     std::size_t n_steps, const Mat& seed_basis) {
  check_span(source, t_start, n_steps);
  check_seed(source, seed_basis);
  return accumulate(
      source, n_steps, seed_basis, [&](std::size_t s) -> const Mat& { return source.step(t_start + s); }, t_start);
}

StabilizedProduct stabilized_adjoint_product(const CocycleSource& source, std::size_t t_start,
                                             std::size_t n_steps, const Mat& seed_basis) {
  check_span(source, t_start, n_steps);
  check_seed(source, seed_basis);
  const std::size_t last = t_start + n_steps - 1;
  return accumulate(
      source, n_steps, seed_basis, [&](std::size_t s) { return source.step(last - s).transpose(); },
      t_start);
}

Mat push_forward(const CocycleSource& source, std::size_t t_start, std::size_t n_steps,
                 const Mat& seed_basis) {
  check_seed(source, seed_basis);
  if (n_steps == 0) return seed_basis;
  check_span(source, t_start, n_steps);
  const Index d = source.dim();
  const Index k = seed_basis.cols();
  Mat Q = seed_basis;
  Eigen::HouseholderQR<Mat> qr(d, k);
  Mat Z(d, k), R(k, k);
  for (std::size_t s = 0; s < n_steps; ++s) {
    Z.noalias() = source.step(t_start + s) * Q;
    if (!orthonormalize(Z, qr, Q, R)) {
      throw DegeneracyError("push_forward: rank collapse at step " + std::to_string(t_start + s));
    }
  }
  return Q;
}

std::string companion_matrices_to_json(const FittedModel& model) {
  nlohmann::json doc = nlohmann::json::array();
  for (std::size_t i = 0; i < model.clusters.size(); ++i) {
    const Mat a = companion_matrix(model.clusters[i]);
    nlohmann::json rows = nlohmann::json::array();
    for (Index r = 0; r < a.rows(); ++r) {
      std::vector<double> row(a.cols());
      for (Index c = 0; c < a.cols(); ++c) row[c] = a(r, c);
      rows.push_back(row);
    }
    doc.push_back({{"cluster", i}, {"matrix", rows}});
  }
  return doc.dump(1) + "\n";
}

}  // namespace clvlab
