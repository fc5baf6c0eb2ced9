#include "clvlab/clv.hpp"

#include "clvlab/error.hpp"

#include <cmath>
#include <string>

namespace clvlab {

namespace {

void fix_sign(Eigen::Ref<Vec> v) {
  const double tol = 1e-12 * v.cwiseAbs().maxCoeff();
  for (Index i = 0; i < v.size(); ++i) {
    if (std::abs(v[i]) > tol) {
      if (v[i] < 0.0) v = -v;
      return;
    }
  }
}

bool has_close_values(const Vec& sv) {
  for (Index j = 0; j + 1 < sv.size(); ++j) {
    if (sv[j] - sv[j + 1] < 1e-12 * sv[0]) return true;
  }
  return false;
}

}  // namespace

void ClvParams::validate() const {
  if (past < 1) throw ParameterError("clv: N (past steps) must be >= 1");
  if (future < 1) throw ParameterError("clv: M (future steps) must be >= 1");
  if (correction < 0) throw ParameterError("clv: n (correction steps) must be >= 0");
}

TimeRange clv_coverage(const CocycleSource& source, const ClvParams& params) {
  params.validate();
  const auto lead = static_cast<std::size_t>(params.past + params.correction);
  const auto tail = static_cast<std::size_t>(params.future);
  if (source.length() < lead + tail) return {lead, lead, 1};
  return {lead, source.length() - tail + 1, 1};
}

Vec le_spectrum_qr(const CocycleSource& source, std::size_t t_start, std::size_t n_steps) {
  const Index d = source.dim();
  const auto prod = stabilized_product(source, t_start, n_steps, Mat::Identity(d, d));
  return prod.log_growth / (static_cast<double>(n_steps) * source.dt());
}

ClvResult clv_at(const CocycleSource& source, std::size_t t, const ClvParams& params) {
  params.validate();
  const auto N = static_cast<std::size_t>(params.past);
  const auto M = static_cast<std::size_t>(params.future);
  const auto n = static_cast<std::size_t>(params.correction);
  if (t < N + n || t + M > source.length()) {
    throw RangeError("clv_at: t=" + std::to_string(t) + " needs steps [" +
                     (t < N + n ? std::string("-") : std::to_string(t - N - n)) + ", " +
                     std::to_string(t + M) + ") within [0, " + std::to_string(source.length()) + ")");
  }
  const Index d = source.dim();
  const Mat eye = Mat::Identity(d, d);
  ClvResult res;
  res.t = t;

  // Past filtration at t - n from the forward cocycle out of the past fibre.
  const auto past = stabilized_product(source, t - n - N, N, eye);
  Eigen::JacobiSVD<Mat> past_svd(past.R, Eigen::ComputeFullU);
  const Mat left = past.Q * past_svd.matrixU();

  // Covariant correction: nested subspaces carried to t.
  const Mat pushed = push_forward(source, t - n, n, left);

  // Future filtration at t from the adjoint: the right singular vectors of
  // F(t, t+M) are the left singular vectors of its transpose. Trailing
  // columns are used only through their span, the orthogonal complement of
  // the accurately computed leading ones.
  const auto adj = stabilized_adjoint_product(source, t, M, eye);
  Eigen::JacobiSVD<Mat> fut_svd(adj.R, Eigen::ComputeFullU);
  const Mat right = adj.Q * fut_svd.matrixU();

  // Growth along the past filtration: diagonal of F pushed = Q R.
  const auto fut = stabilized_product(source, t, M, pushed);

  res.multiplicity_warning =
      has_close_values(past_svd.singularValues()) || has_close_values(fut_svd.singularValues());

  res.vectors.resize(d, d);
  res.ftle.resize(d);
  for (Index j = 0; j < d; ++j) {
    const auto lower = pushed.leftCols(j + 1);
    const auto upper = right.rightCols(d - j);
    const Mat cross = lower.transpose() * upper;
    Eigen::JacobiSVD<Mat> isvd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const double cosine = isvd.singularValues()[0];
    if (cosine < 1.0 - kIntersectionTolerance) {
      throw NoIntersectionError(static_cast<int>(j + 1),
                                "clv_at: filtrations do not intersect for j=" + std::to_string(j + 1) +
                                    " (cosine " + std::to_string(cosine) + ")");
    }
    Vec phi = lower * isvd.matrixU().col(0) + upper * isvd.matrixV().col(0);
    phi.normalize();
    fix_sign(phi);
    res.vectors.col(j) = phi;

    // phi lies in the span of the first j + 1 pushed vectors, so its growth
    // away from the faster directions is the (j, j) factor of the seeded
    // product. Applying F to phi directly would amplify rounding along the
    // faster directions by the spectral gap raised to the power M.
    res.ftle[j] = fut.log_growth[j] / (static_cast<double>(M) * source.dt());
  }

  res.angles = (res.vectors.transpose() * res.vectors).cwiseAbs();
  res.angles.diagonal().setOnes();
  res.angles = res.angles.cwiseMin(1.0);
  res.ok = true;
  return res;
}

std::vector<ClvResult> clv_series(const CocycleSource& source, const TimeRange& range,
                                  const ClvParams& params, Execution execution) {
  params.validate();
  if (range.stride < 1) throw ParameterError("clv_series: stride must be >= 1");
  const std::size_t count = range.count();
  if (count == 0) throw ParameterError("clv_series: empty time range");
  std::vector<ClvResult> out(count);
  auto body = [&](std::size_t i) {
    const std::size_t t = range.begin + i * range.stride;
    try {
      out[i] = clv_at(source, t, params);
    } catch (const Error& e) {
      out[i] = ClvResult{};
      out[i].t = t;
      out[i].error = e.what();
    }
  };
  if (execution == Execution::parallel) {
    const auto n = static_cast<long>(count);
#pragma omp parallel for schedule(dynamic, 16)
    for (long i = 0; i < n; ++i) body(static_cast<std::size_t>(i));
  } else {
    for (std::size_t i = 0; i < count; ++i) body(i);
  }
  return out;
}

int near_neutral_index(const ClvResult& result, NeutralRule rule) {
  const auto d = static_cast<int>(result.ftle.size());
  if (d == 0) throw ParameterError("near_neutral_index: empty result");
  if (rule == NeutralRule::second) return d >= 2 ? 1 : 0;
  int best = 0;
  for (int j = 1; j < d; ++j) {
    if (std::abs(result.ftle[j]) < std::abs(result.ftle[best])) best = j;
  }
  return best;
}

}  // namespace clvlab
