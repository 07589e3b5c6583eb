#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include "json.hpp"

#include "sosstab/polynomial.hpp"
#include "sosstab/sdp.hpp"
#include "sosstab/sos.hpp"
#include "sosstab/system.hpp"
#include "sosstab/validate.hpp"

namespace sosstab {

using nlohmann::json;

// Shortest representation that parses back to the identical double.
inline json poly_to_json(const Polynomial& p) {
  json arr = json::array();
  for (const auto& [e, c] : p.terms()) arr.push_back({{"exponents", e}, {"coeff", c}});
  return arr;
}

inline Polynomial poly_from_json(const json& j, int nvars) {
  if (!j.is_array()) throw std::invalid_argument("poly_from_json: expected an array of terms");
  Polynomial p(nvars);
  for (const json& rec : j) {
    if (!rec.contains("exponents") || !rec.contains("coeff"))
      throw std::invalid_argument("poly_from_json: term needs exponents and coeff");
    const json& je = rec["exponents"];
    if (!je.is_array() || static_cast<int>(je.size()) != nvars)
      throw std::invalid_argument("poly_from_json: exponent length does not match nvars");
    Exponents e(nvars);
    for (int k = 0; k < nvars; ++k) {
      if (!je[k].is_number_integer() || je[k].get<int>() < 0)
        throw std::invalid_argument("poly_from_json: exponents must be nonnegative integers");
      e[k] = je[k].get<int>();
    }
    if (!rec["coeff"].is_number())
      throw std::invalid_argument("poly_from_json: coeff must be a number");
    p.add_term(e, rec["coeff"].get<double>());
  }
  return p;
}

inline json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Eigen::MatrixXd matrix_from_json(const json& j) {
  if (!j.is_array()) throw std::invalid_argument("matrix_from_json: expected an array of rows");
  const Eigen::Index nr = static_cast<Eigen::Index>(j.size());
  if (nr == 0) return Eigen::MatrixXd(0, 0);
  const Eigen::Index nc = static_cast<Eigen::Index>(j[0].size());
  Eigen::MatrixXd m(nr, nc);
  for (Eigen::Index i = 0; i < nr; ++i) {
    if (static_cast<Eigen::Index>(j[i].size()) != nc)
      throw std::invalid_argument("matrix_from_json: ragged rows");
    for (Eigen::Index c = 0; c < nc; ++c) m(i, c) = j[i][c].get<double>();
  }
  return m;
}

inline json vector_to_json(const Eigen::VectorXd& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

inline Eigen::VectorXd vector_from_json(const json& j) {
  if (!j.is_array()) throw std::invalid_argument("vector_from_json: expected an array");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = j[i].get<double>();
  return v;
}

inline json basis_to_json(const std::vector<Exponents>& basis) {
  json arr = json::array();
  for (const Exponents& e : basis) arr.push_back(e);
  return arr;
}

inline std::vector<Exponents> basis_from_json(const json& j, int nvars) {
  if (!j.is_array()) throw std::invalid_argument("basis_from_json: expected an array");
  std::vector<Exponents> basis;
  for (const json& je : j) {
    if (!je.is_array() || static_cast<int>(je.size()) != nvars)
      throw std::invalid_argument("basis_from_json: exponent length does not match nvars");
    basis.push_back(je.get<Exponents>());
  }
  return basis;
}

inline json certificate_to_json(const LyapunovCertificate& cert) {
  json j;
  j["V"] = poly_to_json(cert.v);
  j["p"] = poly_to_json(cert.p);
  j["eps1"] = cert.eps1;
  j["eps2"] = cert.eps2;
  j["gram"] = json::array({
      json{{"basis", basis_to_json(cert.basis_pos)}, {"matrix", matrix_to_json(cert.gram_pos)}},
      json{{"basis", basis_to_json(cert.basis_dec)}, {"matrix", matrix_to_json(cert.gram_dec)}},
  });
  j["residuals"] = {{"positivity", cert.residual_pos},
                    {"decrease", cert.residual_dec},
                    {"min_eig_positivity", cert.min_eig_pos},
                    {"min_eig_decrease", cert.min_eig_dec}};
  j["status"] = to_string(cert.status);
  return j;
}

inline CertStatus cert_status_from_string(const std::string& s) {
  if (s == "ok") return CertStatus::Ok;
  if (s == "flagged") return CertStatus::Flagged;
  if (s == "invalid") return CertStatus::Invalid;
  throw std::invalid_argument("cert_status_from_string: unknown status '" + s + "'");
}

// The product term is not stored in the file; it is rebuilt from the system
// the certificate is being checked against.
inline LyapunovCertificate certificate_from_json(const json& j, const Polynomial& product_term) {
  for (const char* key : {"V", "p", "eps1", "eps2", "gram", "residuals", "status"})
    if (!j.contains(key))
      throw std::invalid_argument(std::string("certificate_from_json: missing field ") + key);
  if (!j["gram"].is_array() || j["gram"].size() != 2)
    throw std::invalid_argument("certificate_from_json: expected two gram blocks");

  const int nvars = product_term.nvars();
  LyapunovCertificate cert;
  cert.v = poly_from_json(j["V"], nvars);
  cert.p = poly_from_json(j["p"], nvars);
  cert.product_term = product_term;
  cert.eps1 = j["eps1"].get<double>();
  cert.eps2 = j["eps2"].get<double>();
  cert.basis_pos = basis_from_json(j["gram"][0]["basis"], nvars);
  cert.gram_pos = matrix_from_json(j["gram"][0]["matrix"]);
  cert.basis_dec = basis_from_json(j["gram"][1]["basis"], nvars);
  cert.gram_dec = matrix_from_json(j["gram"][1]["matrix"]);
  const json& res = j["residuals"];
  cert.residual_pos = res["positivity"].get<double>();
  cert.residual_dec = res["decrease"].get<double>();
  cert.min_eig_pos = res["min_eig_positivity"].get<double>();
  cert.min_eig_dec = res["min_eig_decrease"].get<double>();
  cert.status = cert_status_from_string(j["status"].get<std::string>());
  if (static_cast<int>(cert.basis_pos.size()) != cert.gram_pos.rows() ||
      cert.gram_pos.rows() != cert.gram_pos.cols() ||
      static_cast<int>(cert.basis_dec.size()) != cert.gram_dec.rows() ||
      cert.gram_dec.rows() != cert.gram_dec.cols())
    throw std::invalid_argument("certificate_from_json: gram block shape mismatch");
  return cert;
}

inline json system_to_json(const PolySystem& sys) {
  json j;
  j["name"] = sys.name;
  j["n"] = sys.nvars();
  j["sphere_dim"] = sys.sphere_dim;
  json f = json::array();
  for (const Polynomial& fi : sys.f) f.push_back(poly_to_json(fi));
  j["f"] = std::move(f);
  j["h"] = poly_to_json(sys.h);
  json eq = json::array();
  for (const Eigen::VectorXd& e : sys.equilibria) eq.push_back(vector_to_json(e));
  j["equilibria"] = std::move(eq);
  j["scale"] = vector_to_json(sys.scale);
  j["shift"] = vector_to_json(sys.shift);
  return j;
}

inline PolySystem system_from_json(const json& j) {
  for (const char* key : {"name", "n", "sphere_dim", "f", "h", "equilibria", "scale", "shift"})
    if (!j.contains(key))
      throw std::invalid_argument(std::string("system_from_json: missing field ") + key);
  const int n = j["n"].get<int>();
  PolySystem sys;
  sys.name = j["name"].get<std::string>();
  sys.sphere_dim = j["sphere_dim"].get<int>();
  for (const json& jf : j["f"]) sys.f.push_back(poly_from_json(jf, n));
  if (static_cast<int>(sys.f.size()) != n)
    throw std::invalid_argument("system_from_json: f length does not match n");
  sys.h = poly_from_json(j["h"], n);
  for (const json& je : j["equilibria"]) sys.equilibria.push_back(vector_from_json(je));
  sys.scale = vector_from_json(j["scale"]);
  sys.shift = vector_from_json(j["shift"]);
  return sys;
}

inline json report_to_json(const ValidationReport& rep) {
  return json{{"manifold_samples", rep.manifold_samples},
              {"ambient_samples", rep.ambient_samples},
              {"max_h_abs", rep.max_h_abs},
              {"min_v", rep.min_v},
              {"min_v_margin", rep.min_v_margin},
              {"max_decrease_violation", rep.max_decrease_violation},
              {"min_gram_eig", rep.min_gram_eig},
              {"positivity_ok", rep.positivity_ok},
              {"decrease_ok", rep.decrease_ok},
              {"gram_ok", rep.gram_ok},
              {"passed", rep.passed}};
}

// Regression-fixture form of a problem: the constraint matrix is stored dense
// since fixtures stay desk-sized.
inline json sdp_problem_to_json(const SdpProblem& prob) {
  json j;
  j["dims"] = prob.layout.dims;
  j["nfree"] = prob.layout.nfree;
  j["a"] = matrix_to_json(Eigen::MatrixXd(prob.a));
  j["b"] = vector_to_json(prob.b);
  j["c"] = vector_to_json(prob.c);
  return j;
}

inline SdpProblem sdp_problem_from_json(const json& j) {
  for (const char* key : {"dims", "nfree", "a", "b", "c"})
    if (!j.contains(key))
      throw std::invalid_argument(std::string("sdp_problem_from_json: missing field ") + key);
  SdpProblem prob;
  prob.layout = SdpLayout(j["dims"].get<std::vector<int>>(), j["nfree"].get<int>());
  const Eigen::MatrixXd a = matrix_from_json(j["a"]);
  if (a.cols() != prob.layout.total())
    throw std::invalid_argument("sdp_problem_from_json: matrix width does not match layout");
  prob.a = a.sparseView();
  prob.b = vector_from_json(j["b"]);
  prob.c = vector_from_json(j["c"]);
  return prob;
}

inline json sdp_solution_to_json(const SdpSolution& sol) {
  json j;
  j["status"] = to_string(sol.status);
  json blocks = json::array();
  for (const Eigen::MatrixXd& m : sol.blocks) blocks.push_back(matrix_to_json(m));
  j["blocks"] = std::move(blocks);
  json duals = json::array();
  for (const Eigen::MatrixXd& m : sol.dual_blocks) duals.push_back(matrix_to_json(m));
  j["dual_blocks"] = std::move(duals);
  j["free_vals"] = vector_to_json(sol.free_vals);
  j["y"] = vector_to_json(sol.y);
  j["primal_obj"] = sol.primal_obj;
  j["dual_obj"] = sol.dual_obj;
  j["residuals"] = {{"primal", sol.residuals.primal},
                    {"dual", sol.residuals.dual},
                    {"gap", sol.residuals.gap}};
  j["iterations"] = sol.iterations;
  j["message"] = sol.message;
  return j;
}

// 17 significant digits round-trip every finite double through text exactly.
inline std::string format_g17(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

struct CsvColumn {
  std::string name;
  std::vector<double> values;
};

inline void write_trajectory_csv(std::ostream& out, const Trajectory& traj,
                                 const std::vector<CsvColumn>& extra = {}) {
  const std::size_t rows = traj.t.size();
  const int n = rows > 0 ? static_cast<int>(traj.x.front().size()) : 0;
  for (const CsvColumn& col : extra)
    if (col.values.size() != rows)
      throw std::invalid_argument("write_trajectory_csv: column length mismatch");

  out << 't';
  for (int k = 1; k <= n; ++k) out << ",x" << k;
  for (const CsvColumn& col : extra) out << ',' << col.name;
  out << '\n';
  for (std::size_t i = 0; i < rows; ++i) {
    out << format_g17(traj.t[i]);
    for (int k = 0; k < n; ++k) out << ',' << format_g17(traj.x[i][k]);
    for (const CsvColumn& col : extra) out << ',' << format_g17(col.values[i]);
    out << '\n';
  }
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_json_file: cannot open " + path);
  json j;
  in >> j;
  return j;
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_text_file: cannot open " + path);
  out << content;
  if (!out) throw std::runtime_error("write_text_file: write failed for " + path);
}

inline void write_json_file(const std::string& path, const json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

}  // namespace sosstab
