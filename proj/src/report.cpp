#include "clvlab/report.hpp"

#include "clvlab/error.hpp"
#include "clvlab/io.hpp"

#include "json.hpp"

#include <fstream>
#include <ostream>

namespace clvlab::report {

using io::format_double;

void write_clv_csv(std::ostream& out, std::span<const ClvResult> clvs) {
  Index d = 0;
  for (const auto& r : clvs) {
    if (r.ok) {
      d = r.vectors.cols();
      break;
    }
  }
  out << "t";
  for (Index j = 1; j <= d; ++j) out << ",ftle_" << j;
  for (Index i = 1; i <= d; ++i) {
    for (Index j = i + 1; j <= d; ++j) out << ",theta_" << i << j;
  }
  out << ",ok\n";
  for (const auto& r : clvs) {
    out << r.t;
    for (Index j = 0; j < d; ++j) out << ',' << (r.ok ? format_double(r.ftle[j]) : "nan");
    for (Index i = 0; i < d; ++i) {
      for (Index j = i + 1; j < d; ++j) out << ',' << (r.ok ? format_double(r.angles(i, j)) : "nan");
    }
    out << ',' << (r.ok ? 1 : 0) << '\n';
  }
}

void write_clv_vectors_json(std::ostream& out, std::span<const ClvResult> clvs) {
  nlohmann::json doc = nlohmann::json::array();
  for (const auto& r : clvs) {
    nlohmann::json item = {{"t", r.t}, {"ok", r.ok}};
    if (r.ok) {
      nlohmann::json vecs = nlohmann::json::array();
      for (Index j = 0; j < r.vectors.cols(); ++j) {
        std::vector<double> col(r.vectors.col(j).data(), r.vectors.col(j).data() + r.vectors.rows());
        vecs.push_back(col);
      }
      item["vectors"] = vecs;
      item["ftle"] = std::vector<double>(r.ftle.data(), r.ftle.data() + r.ftle.size());
    } else {
      item["error"] = r.error;
    }
    doc.push_back(std::move(item));
  }
  out << doc.dump() << '\n';
}

void write_alignment_csv(std::ostream& out, const AlignmentSeries& series) {
  const bool flow = series.flow_theta.size() == series.size();
  out << "t,theta12,state,flow_theta\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    out << series.t[k] << ',' << format_double(series.theta[k]) << ','
        << (k < series.state.size() ? series.state[k] : -1) << ','
        << (flow ? format_double(series.flow_theta[k]) : "nan") << '\n';
  }
}

void write_lcurve_csv(std::ostream& out, const LCurve& curve) {
  out << "p,loss,p_normalized,loss_normalized,curvature,selected\n";
  for (std::size_t i = 0; i < curve.p_values.size(); ++i) {
    out << format_double(curve.p_values[i]) << ',' << format_double(curve.losses[i]) << ','
        << format_double(curve.knee.x_normalized[i]) << ','
        << format_double(curve.knee.y_normalized[i]) << ','
        << format_double(curve.knee.curvature[i]) << ','
        << (static_cast<int>(i) == curve.knee.index ? 1 : 0) << '\n';
  }
}

namespace {

template <typename Matrix>
void write_matrix(const std::filesystem::path& path, const GridSearchReport& rep, const Matrix& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open for writing: " + path.string());
  out << "N\\n";
  for (long n : rep.n_values) out << ',' << n;
  out << '\n';
  for (std::size_t r = 0; r < rep.N_values.size(); ++r) {
    out << rep.N_values[r];
    for (std::size_t c = 0; c < rep.n_values.size(); ++c) {
      if constexpr (std::is_integral_v<typename Matrix::Scalar>) {
        out << ',' << m(static_cast<Index>(r), static_cast<Index>(c));
      } else {
        out << ',' << format_double(m(static_cast<Index>(r), static_cast<Index>(c)));
      }
    }
    out << '\n';
  }
}

}  // namespace

void write_grid_report(const std::filesystem::path& dir, const GridSearchReport& rep,
                       const std::string& metric_json) {
  std::filesystem::create_directories(dir);
  write_matrix(dir / "delta.csv", rep, rep.delta);
  write_matrix(dir / "tv.csv", rep, rep.tv);
  write_matrix(dir / "failures.csv", rep, rep.failures);
  nlohmann::json doc;
  doc["N_values"] = rep.N_values;
  doc["n_values"] = rep.n_values;
  doc["metric_spec"] = nlohmann::json::parse(metric_json);
  doc["files"] = {"delta.csv", "tv.csv", "failures.csv"};
  doc["failed_cells"] = rep.failures.sum();
  doc["messages"] = rep.messages;
  write_text(dir / "grid.json", doc.dump(1) + "\n");
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open for writing: " + path.string());
  out << text;
  if (!out) throw Error("write failed: " + path.string());
}

}  // namespace clvlab::report
