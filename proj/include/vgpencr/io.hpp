#pragma once

#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vgpencr/basis.hpp"
#include "vgpencr/cavi.hpp"
#include "vgpencr/errors.hpp"
#include "vgpencr/grouping.hpp"
#include "vgpencr/pencr.hpp"
#include "vgpencr/predict.hpp"
#include "vgpencr/types.hpp"

namespace vgpencr::io {

using json = nlohmann::json;

struct IoError : Error {
  using Error::Error;
};

inline std::vector<double> to_std(const Vector<double>& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

inline Vector<double> from_std(const std::vector<double>& v) {
  return Eigen::Map<const Vector<double>>(v.data(), static_cast<Index>(v.size()));
}

// Numeric CSV. A single leading non-numeric line is treated as a header and
// skipped.
inline Matrix<double> read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    bool ok = true;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        const double v = std::stod(cell, &used);
        row.push_back(v);
      } catch (const std::exception&) {
        ok = false;
        break;
      }
    }
    if (!ok) {
      if (first) {
        first = false;
        continue;  // header
      }
      throw IoError("non-numeric cell in " + path);
    }
    first = false;
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw IoError("ragged rows in " + path);
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw IoError("no data rows in " + path);
  Matrix<double> out(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (Index i = 0; i < out.rows(); ++i)
    for (Index j = 0; j < out.cols(); ++j) out(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  return out;
}

inline void write_csv(const std::string& path, const Matrix<double>& m,
                      const std::vector<std::string>& header = {}) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << std::setprecision(17);
  if (!header.empty()) {
    for (std::size_t j = 0; j < header.size(); ++j) out << (j ? "," : "") << header[j];
    out << "\n";
  }
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << m(i, j);
    out << "\n";
  }
}

inline std::vector<Index> read_group_sizes(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw IoError("bad JSON in " + path + ": " + e.what());
  }
  if (!j.contains("sizes") || !j["sizes"].is_array()) {
    throw IoError(path + " must contain a \"sizes\" array");
  }
  std::vector<Index> sizes;
  for (const auto& v : j["sizes"]) sizes.push_back(v.get<Index>());
  return sizes;
}

inline void write_group_sizes(const std::string& path, const std::vector<Index>& sizes) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << json{{"sizes", sizes}}.dump(2) << "\n";
}

inline json basis_to_json(const SplineBasisSpec<double>& spec) {
  return json{{"kind", spec.kind == BasisKind::NaturalCubic ? "natural-cubic" : "bspline"},
              {"dim", spec.dim},
              {"degree", spec.degree},
              {"lo", spec.lo},
              {"hi", spec.hi},
              {"knots", spec.knots}};
}

inline SplineBasisSpec<double> basis_from_json(const json& j) {
  SplineBasisSpec<double> spec;
  spec.kind = j.at("kind").get<std::string>() == "natural-cubic" ? BasisKind::NaturalCubic
                                                                 : BasisKind::BSpline;
  spec.dim = j.at("dim").get<Index>();
  spec.degree = j.at("degree").get<int>();
  spec.lo = j.at("lo").get<double>();
  spec.hi = j.at("hi").get<double>();
  spec.knots = j.at("knots").get<std::vector<double>>();
  return spec;
}

// Full fitted-model document: the sparse estimate, the variational-fit
// summary, the centering statistics, and any basis specs the design used.
struct ModelFile {
  SparseEstimate<double> estimate;
  std::vector<double> mu_beta, m_b, elbo_trace;
  double m_inv_sigma2 = 0;
  Index cycles_run = 0;
  bool converged = false;
  double tau = 0;
  CenteringStats<double> stats;
  std::vector<Index> sizes;
  std::vector<SplineBasisSpec<double>> bases;
};

inline void write_model(const std::string& path, const ModelFile& m) {
  json j;
  j["beta_tilde"] = to_std(m.estimate.beta_tilde);
  std::vector<Index> selected_1based;
  for (Index g : m.estimate.selected) selected_1based.push_back(g + 1);
  j["selected"] = selected_1based;
  j["lambda"] = m.estimate.lambda;
  j["u_hat"] = to_std(m.estimate.u_hat);
  j["mode"] = m.estimate.mode == SparsifyMode::Grouped ? "grouped" : "nongrouped";
  j["mu_beta"] = m.mu_beta;
  j["m_b"] = m.m_b;
  j["m_inv_sigma2"] = m.m_inv_sigma2;
  j["elbo_trace"] = m.elbo_trace;
  j["cycles_run"] = m.cycles_run;
  j["converged"] = m.converged;
  j["tau"] = m.tau;
  j["y_bar"] = m.stats.y_bar;
  j["x_bar"] = to_std(m.stats.x_bar);
  j["sizes"] = m.sizes;
  json bases = json::array();
  for (const auto& b : m.bases) bases.push_back(basis_to_json(b));
  j["bases"] = bases;
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << j.dump(2) << "\n";
}

inline ModelFile read_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw IoError("bad JSON in " + path + ": " + e.what());
  }
  ModelFile m;
  try {
    m.estimate.beta_tilde = from_std(j.at("beta_tilde").get<std::vector<double>>());
    for (Index g : j.at("selected").get<std::vector<Index>>()) {
      m.estimate.selected.push_back(g - 1);
    }
    m.estimate.lambda = j.at("lambda").get<double>();
    m.estimate.u_hat = from_std(j.at("u_hat").get<std::vector<double>>());
    m.estimate.mode = j.at("mode").get<std::string>() == "grouped" ? SparsifyMode::Grouped
                                                                   : SparsifyMode::NonGrouped;
    m.mu_beta = j.at("mu_beta").get<std::vector<double>>();
    m.m_b = j.at("m_b").get<std::vector<double>>();
    m.m_inv_sigma2 = j.at("m_inv_sigma2").get<double>();
    m.elbo_trace = j.at("elbo_trace").get<std::vector<double>>();
    m.cycles_run = j.at("cycles_run").get<Index>();
    m.converged = j.at("converged").get<bool>();
    m.tau = j.at("tau").get<double>();
    m.stats.y_bar = j.at("y_bar").get<double>();
    m.stats.x_bar = from_std(j.at("x_bar").get<std::vector<double>>());
    m.sizes = j.at("sizes").get<std::vector<Index>>();
    for (const auto& b : j.at("bases")) m.bases.push_back(basis_from_json(b));
  } catch (const json::exception& e) {
    throw IoError("model file " + path + " is missing fields: " + e.what());
  }
  return m;
}

inline ModelFile make_model_file(const CaviFit<double>& fit, const SparseEstimate<double>& est,
                                 const std::vector<SplineBasisSpec<double>>& bases = {}) {
  ModelFile m;
  m.estimate = est;
  m.mu_beta = to_std(fit.state.mu_beta);
  m.m_b = to_std(fit.state.m_b);
  m.m_inv_sigma2 = fit.state.m_inv_sigma2;
  m.elbo_trace = fit.state.elbo_trace;
  m.cycles_run = fit.cycles_run;
  m.converged = fit.converged;
  m.tau = fit.hyper.tau;
  m.stats = fit.data.stats;
  m.sizes = fit.data.design.spec.sizes;
  m.bases = bases;
  return m;
}

inline void write_cv_csv(const std::string& path, const CvResult<double>& cv) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << std::setprecision(17);
  out << "lambda,mean_cv_error,se_cv_error\n";
  for (std::size_t k = 0; k < cv.lambdas.size(); ++k) {
    out << cv.lambdas[k] << "," << cv.mean_cv_error[k] << "," << cv.se_cv_error[k] << "\n";
  }
}

}  // namespace vgpencr::io
