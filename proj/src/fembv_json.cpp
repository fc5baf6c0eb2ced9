#include "clvlab/error.hpp"
#include "clvlab/fembv.hpp"

#include "json.hpp"

#include <cmath>

namespace clvlab {

namespace {

using nlohmann::json;

json row_major(const Mat& m) {
  json a = json::array();
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) a.push_back(m(r, c));
  }
  return a;
}

Mat from_row_major(const json& a, Index rows, Index cols) {
  if (!a.is_array() || static_cast<Index>(a.size()) != rows * cols) {
    throw ShapeError("model json: matrix has " + std::to_string(a.size()) + " entries, expected " +
                     std::to_string(rows * cols));
  }
  Mat m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) m(r, c) = a.at(static_cast<std::size_t>(r * cols + c)).get<double>();
  }
  return m;
}

}  // namespace

std::string fitted_model_to_json(const FittedModel& model) {
  const auto stability = stability_report(model);
  json doc;
  doc["format_version"] = kModelFormatVersion;
  doc["hyper"] = {{"K", model.hyper.K},
                  {"m", model.hyper.m},
                  {"p", model.hyper.p},
                  {"C", model.hyper.C},
                  {"T", model.hyper.T}};
  doc["seed"] = model.seed;
  doc["master_seed"] = model.master_seed;
  doc["dim"] = model.clusters.empty() ? 0 : model.clusters[0].dim();
  json clusters = json::array();
  for (std::size_t i = 0; i < model.clusters.size(); ++i) {
    const auto& c = model.clusters[i];
    json coeffs = json::array();
    for (const auto& a : c.coeffs) coeffs.push_back(row_major(a));
    clusters.push_back({{"mu", row_major(c.mu.transpose())},
                        {"coeffs", coeffs},
                        {"sigma", row_major(c.sigma)},
                        {"companion_spectral_radius", stability.spectral_radius[i]},
                        {"divergent", static_cast<bool>(stability.divergent[i])}});
  }
  doc["clusters"] = clusters;
  doc["labels"] = model.affiliation.hard_labels;
  doc["loss_trace"] = model.loss_trace;
  json restarts = json::array();
  for (double l : model.restart_losses) {
    if (std::isfinite(l)) {
      restarts.push_back(l);
    } else {
      restarts.push_back(nullptr);
    }
  }
  doc["restart_losses"] = restarts;
  doc["reseeds"] = model.reseeds;
  return doc.dump(1) + "\n";
}

FittedModel fitted_model_from_json(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ParameterError(std::string("model json: ") + e.what());
  }
  try {
    const int version = doc.at("format_version").get<int>();
    if (version != kModelFormatVersion) {
      throw ParameterError("model json: unsupported format_version " + std::to_string(version));
    }
    FittedModel model;
    const auto& h = doc.at("hyper");
    model.hyper.K = h.at("K").get<int>();
    model.hyper.m = h.at("m").get<int>();
    model.hyper.p = h.at("p").get<double>();
    model.hyper.C = h.at("C").get<long>();
    model.hyper.T = h.at("T").get<Index>();
    model.seed = doc.at("seed").get<std::uint64_t>();
    model.master_seed = doc.value("master_seed", std::uint64_t{0});
    const Index d = doc.at("dim").get<Index>();
    for (const auto& c : doc.at("clusters")) {
      ClusterParams theta;
      theta.mu = from_row_major(c.at("mu"), 1, d).transpose();
      for (const auto& a : c.at("coeffs")) theta.coeffs.push_back(from_row_major(a, d, d));
      theta.sigma = from_row_major(c.at("sigma"), d, d);
      if (theta.memory() != model.hyper.m) throw ShapeError("model json: coefficient count != m");
      model.clusters.push_back(std::move(theta));
    }
    if (static_cast<int>(model.clusters.size()) != model.hyper.K) {
      throw ShapeError("model json: cluster count != K");
    }
    const auto labels = doc.at("labels").get<std::vector<int>>();
    if (static_cast<Index>(labels.size()) != model.hyper.T) throw ShapeError("model json: labels length != T");
    model.affiliation = Affiliation::from_labels(labels, model.hyper.K, model.hyper.m);
    model.loss_trace = doc.at("loss_trace").get<std::vector<double>>();
    if (doc.contains("restart_losses")) {
      for (const auto& l : doc["restart_losses"]) {
        model.restart_losses.push_back(l.is_null() ? std::nan("") : l.get<double>());
      }
    }
    model.reseeds = doc.value("reseeds", 0);
    return model;
  } catch (const json::exception& e) {
    throw ParameterError(std::string("model json: ") + e.what());
  }
}

}  // namespace clvlab
