#pragma once

// Lowers almost-global stability conditions for a polynomial system on a
// unit-constraint manifold to a single semidefinite program: find V and a
// multiplier p such that V - eps1*|x|^2 is a sum of squares and so is
// -<grad V, f> + p*h - eps2 * prod_i |x - x_i*|^2, where the product runs
// over every equilibrium. Feasibility yields a Lyapunov certificate for
// convergence from all initial states outside a measure-zero set.

#include <Eigen/Dense>

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "polynomial.hpp"
#include "sdp.hpp"
#include "system.hpp"

namespace sosstab {

struct SosProgramSpec {
  PolySystem system;
  int deg_v = 4;
  int deg_p = 6;
  double eps1 = 1e-5;
  double eps2 = 1e-5;
  bool prune = true;
};

inline Polynomial squared_norm_poly(int nvars) {
  Polynomial r(nvars);
  for (int i = 0; i < nvars; ++i) {
    Polynomial xi = Polynomial::variable(nvars, i);
    r += xi * xi;
  }
  return r;
}

// prod_i |x - x_i*|^2 over the listed equilibria
inline Polynomial equilibrium_product(const PolySystem& sys) {
  const int n = sys.nvars();
  Polynomial prod = Polynomial::constant(n, 1.0);
  for (const Eigen::VectorXd& xs : sys.equilibria) {
    Polynomial q(n);
    for (int i = 0; i < n; ++i) {
      Polynomial d = Polynomial::variable(n, i) - Polynomial::constant(n, xs[i]);
      q += d * d;
    }
    prod = prod * q;
  }
  return prod;
}

// smallest even degree that accommodates the decrease constraint
inline int degree_budget(const SosProgramSpec& spec) {
  int df = 0;
  for (const Polynomial& fi : spec.system.f) df = std::max(df, fi.degree());
  const int dh = spec.system.h.degree();
  const int k = static_cast<int>(spec.system.equilibria.size());
  int need = std::max({df + spec.deg_v - 1, spec.deg_p + dh, 2 * k});
  return need + (need % 2);
}

struct GramTerm {
  int i = 0;
  int j = 0;          // i <= j
  double weight = 0;  // 1 on the diagonal, 2 off it
};

using MonomialMap = std::map<Exponents, std::vector<GramTerm>, GradedLexLess>;

// Expands z' Q z over the given basis: for each product monomial, the list of
// upper-triangle Gram entries feeding its coefficient.
inline MonomialMap gram_parameterize(const std::vector<Exponents>& basis) {
  if (basis.empty()) throw std::invalid_argument("gram_parameterize: empty basis");
  MonomialMap map;
  const int m = static_cast<int>(basis.size());
  for (int i = 0; i < m; ++i) {
    for (int j = i; j < m; ++j) {
      Exponents prod(basis[i].size());
      for (size_t t = 0; t < prod.size(); ++t) prod[t] = basis[i][t] + basis[j][t];
      map[prod].push_back({i, j, i == j ? 1.0 : 2.0});
    }
  }
  return map;
}

using Support = std::set<Exponents, GradedLexLess>;

// Gram basis for certifying that a polynomial with the given support is a sum
// of squares: start from every monomial whose double fits the degree and
// per-variable box of the support, then repeatedly drop entries whose square
// lies outside the support and cannot pair with any other remaining entry.
inline std::vector<Exponents> prune_gram_basis(const Support& support, int nvars) {
  if (support.empty()) return {};
  const int n = nvars;
  int lo = 1 << 30, hi = 0;
  std::vector<int> varmax(n, 0);
  for (const Exponents& g : support) {
    const int d = total_degree(g);
    lo = std::min(lo, d);
    hi = std::max(hi, d);
    for (int i = 0; i < n; ++i) varmax[i] = std::max(varmax[i], g[i]);
  }

  Support basis;
  for (const Exponents& a : monomial_basis(n, hi / 2)) {
    const int d = total_degree(a);
    if (2 * d < lo || 2 * d > hi) continue;
    bool inside = true;
    for (int i = 0; i < n; ++i)
      if (2 * a[i] > varmax[i]) inside = false;
    if (inside) basis.insert(a);
  }

  bool changed = true;
  while (changed) {
    changed = false;
    for (auto it = basis.begin(); it != basis.end();) {
      Exponents dbl(n);
      for (int i = 0; i < n; ++i) dbl[i] = 2 * (*it)[i];
      bool keep = support.count(dbl) > 0;
      for (auto jt = basis.begin(); !keep && jt != basis.end(); ++jt) {
        if (jt == it) continue;
        Exponents rest(n);
        bool ok = true;
        for (int i = 0; i < n; ++i) {
          rest[i] = dbl[i] - (*jt)[i];
          if (rest[i] < 0) ok = false;
        }
        keep = ok && basis.count(rest) > 0;
      }
      if (keep) {
        ++it;
      } else {
        it = basis.erase(it);
        changed = true;
      }
    }
  }
  return {basis.begin(), basis.end()};
}

struct SosProgram {
  SosProgramSpec spec;
  int budget = 0;                      // even total degree of the decrease constraint
  std::vector<Exponents> v_monomials;  // free coefficients of V, graded order
  std::vector<Exponents> p_monomials;  // free coefficients of p
  std::vector<Exponents> basis_pos;    // Gram basis of the positivity constraint
  std::vector<Exponents> basis_dec;    // Gram basis of the decrease constraint
  Polynomial product_term = Polynomial(1);
  SdpProblem sdp;
};

inline SosProgram build_agas_program(const SosProgramSpec& spec) {
  if (spec.deg_v < 2 || spec.deg_v % 2 != 0)
    throw std::invalid_argument("build_agas_program: deg_v must be a positive even integer");
  if (spec.deg_p < 0) throw std::invalid_argument("build_agas_program: deg_p must be >= 0");
  if (spec.eps1 <= 0.0 || spec.eps2 <= 0.0)
    throw std::invalid_argument("build_agas_program: eps1 and eps2 must be positive");
  validate_system(spec.system);

  const PolySystem& sys = spec.system;
  const int n = sys.nvars();
  SosProgram prog;
  prog.spec = spec;
  prog.budget = degree_budget(spec);
  prog.product_term = equilibrium_product(sys);

  // free variables: V over monomials of degree 1..deg_v, p over 0..deg_p
  for (const Exponents& a : monomial_basis(n, spec.deg_v))
    if (total_degree(a) >= 1) prog.v_monomials.push_back(a);
  prog.p_monomials = monomial_basis(n, spec.deg_p);
  const int nv = static_cast<int>(prog.v_monomials.size());
  const int np = static_cast<int>(prog.p_monomials.size());

  // supports of the two matched polynomials, taking every free coefficient
  // as potentially active
  Support supp_pos;
  for (const Exponents& a : prog.v_monomials) supp_pos.insert(a);

  Support supp_dec;
  for (const Exponents& a : prog.v_monomials) {
    for (int j = 0; j < n; ++j) {
      if (a[j] == 0) continue;
      for (const auto& [b, cf] : sys.f[j].terms()) {
        Exponents g(n);
        for (int t = 0; t < n; ++t) g[t] = a[t] + b[t];
        g[j] -= 1;
        supp_dec.insert(g);
      }
    }
  }
  for (const Exponents& a : prog.p_monomials) {
    for (const auto& [b, ch] : sys.h.terms()) {
      Exponents g(n);
      for (int t = 0; t < n; ++t) g[t] = a[t] + b[t];
      supp_dec.insert(g);
    }
  }
  for (const auto& [g, c] : prog.product_term.terms()) supp_dec.insert(g);

  if (spec.prune) {
    prog.basis_pos = prune_gram_basis(supp_pos, n);
    prog.basis_dec = prune_gram_basis(supp_dec, n);
  } else {
    prog.basis_pos = monomial_basis(n, spec.deg_v / 2);
    prog.basis_dec = monomial_basis(n, prog.budget / 2);
  }
  if (prog.basis_pos.empty() || prog.basis_dec.empty())
    throw std::invalid_argument("build_agas_program: empty Gram basis");

  const int m1 = static_cast<int>(prog.basis_pos.size());
  const int m2 = static_cast<int>(prog.basis_dec.size());
  SdpLayout layout({m1, m2}, nv + np);

  const MonomialMap pairs_pos = gram_parameterize(prog.basis_pos);
  const MonomialMap pairs_dec = gram_parameterize(prog.basis_dec);

  // row keys: every monomial that appears in the Gram expansion or on the
  // matched side of either constraint
  std::map<Exponents, int, GradedLexLess> row_pos, row_dec;
  for (const auto& [g, terms] : pairs_pos) row_pos.emplace(g, 0);
  for (const Exponents& a : prog.v_monomials) row_pos.emplace(a, 0);
  for (const auto& [g, terms] : pairs_dec) row_dec.emplace(g, 0);
  for (const Exponents& g : supp_dec) row_dec.emplace(g, 0);

  int next = 0;
  for (auto& [g, id] : row_pos) id = next++;
  for (auto& [g, id] : row_dec) id = next++;
  const int nrows = next;

  std::vector<Eigen::Triplet<double>> trip;
  Eigen::VectorXd b = Eigen::VectorXd::Zero(nrows);
  Eigen::VectorXd c = Eigen::VectorXd::Zero(layout.total());

  // positivity constraint: z1' G1 z1 - V + eps1 |x|^2 = 0 coefficient-wise
  for (const auto& [g, terms] : pairs_pos) {
    const int r = row_pos.at(g);
    for (const GramTerm& t : terms)
      trip.emplace_back(r, layout.col(0, t.i, t.j), t.i == t.j ? 1.0 : kSqrt2);
  }
  for (int a = 0; a < nv; ++a)
    trip.emplace_back(row_pos.at(prog.v_monomials[a]), layout.free_col(a), -1.0);
  const Polynomial norm2 = squared_norm_poly(n);
  for (const auto& [g, cq] : norm2.terms()) {
    auto it = row_pos.find(g);
    if (it != row_pos.end()) b[it->second] = -spec.eps1 * cq;
  }

  // decrease constraint: z2' G2 z2 + <grad V, f> - p h + eps2 prod = 0
  for (const auto& [g, terms] : pairs_dec) {
    const int r = row_dec.at(g);
    for (const GramTerm& t : terms)
      trip.emplace_back(r, layout.col(1, t.i, t.j), t.i == t.j ? 1.0 : kSqrt2);
  }
  for (int a = 0; a < nv; ++a) {
    const Exponents& alpha = prog.v_monomials[a];
    for (int j = 0; j < n; ++j) {
      if (alpha[j] == 0) continue;
      for (const auto& [bf, cf] : sys.f[j].terms()) {
        Exponents g(n);
        for (int t = 0; t < n; ++t) g[t] = alpha[t] + bf[t];
        g[j] -= 1;
        trip.emplace_back(row_dec.at(g), layout.free_col(a), alpha[j] * cf);
      }
    }
  }
  for (int a = 0; a < np; ++a) {
    const Exponents& pi = prog.p_monomials[a];
    for (const auto& [bh, ch] : sys.h.terms()) {
      Exponents g(n);
      for (int t = 0; t < n; ++t) g[t] = pi[t] + bh[t];
      trip.emplace_back(row_dec.at(g), layout.free_col(nv + a), -ch);
    }
  }
  for (const auto& [g, cp] : prog.product_term.terms()) b[row_dec.at(g)] = -spec.eps2 * cp;

  // objective: trace of the decrease Gram keeps the certificate bounded
  for (int i = 0; i < m2; ++i) c[layout.col(1, i, i)] = 1.0;

  prog.sdp.layout = layout;
  prog.sdp.a.resize(nrows, layout.total());
  prog.sdp.a.setFromTriplets(trip.begin(), trip.end());
  prog.sdp.a.makeCompressed();
  prog.sdp.b = std::move(b);
  prog.sdp.c = std::move(c);
  return prog;
}

inline Polynomial gram_polynomial(const std::vector<Exponents>& basis,
                                  const Eigen::MatrixXd& g, int nvars) {
  const int m = static_cast<int>(basis.size());
  if (g.rows() != m || g.cols() != m)
    throw std::invalid_argument("gram_polynomial: matrix does not match basis");
  Polynomial r(nvars);
  for (int i = 0; i < m; ++i) {
    for (int j = i; j < m; ++j) {
      Exponents prod(basis[i].size());
      for (size_t t = 0; t < prod.size(); ++t) prod[t] = basis[i][t] + basis[j][t];
      const double w = (i == j ? 1.0 : 2.0) * g(i, j);
      if (w != 0.0) r.add_term(prod, w);
    }
  }
  return r;
}

enum class CertStatus { Ok, Flagged, Invalid };

inline const char* to_string(CertStatus s) {
  switch (s) {
    case CertStatus::Ok: return "ok";
    case CertStatus::Flagged: return "flagged";
    default: return "invalid";
  }
}

struct LyapunovCertificate {
  Polynomial v = Polynomial(1);
  Polynomial p = Polynomial(1);
  Polynomial product_term = Polynomial(1);
  std::vector<Exponents> basis_pos, basis_dec;
  Eigen::MatrixXd gram_pos, gram_dec;
  double eps1 = 0, eps2 = 0;
  double residual_pos = 0, residual_dec = 0;  // relative max-coefficient residuals
  double min_eig_pos = 0, min_eig_dec = 0;
  CertStatus status = CertStatus::Invalid;
};

namespace sos_detail {

// Residual of a coefficient-matching identity, measured against the largest
// coefficient of any constituent polynomial so that exact cancellations on
// the matched side do not shrink the denominator to roundoff noise.
inline double relative_residual(const Polynomial& gram_side, const Polynomial& matched,
                                std::initializer_list<double> constituent_scales) {
  const Polynomial diff = gram_side - matched;
  double scale = std::max(gram_side.max_abs_coeff(), 1e-12);
  for (double s : constituent_scales) scale = std::max(scale, s);
  return diff.max_abs_coeff() / scale;
}

}  // namespace sos_detail

inline LyapunovCertificate extract_certificate(const SosProgram& prog,
                                               const SdpSolution& sol) {
  if (sol.status != SdpStatus::Optimal)
    throw std::invalid_argument(std::string("extract_certificate: solver status is ") +
                                to_string(sol.status));
  const int n = prog.spec.system.nvars();
  const int nv = static_cast<int>(prog.v_monomials.size());
  const int np = static_cast<int>(prog.p_monomials.size());
  if (sol.free_vals.size() != nv + np || sol.blocks.size() != 2)
    throw std::invalid_argument("extract_certificate: solution does not match program");

  LyapunovCertificate cert;
  cert.v = Polynomial(n);
  cert.p = Polynomial(n);
  for (int a = 0; a < nv; ++a) cert.v.add_term(prog.v_monomials[a], sol.free_vals[a]);
  for (int a = 0; a < np; ++a) cert.p.add_term(prog.p_monomials[a], sol.free_vals[nv + a]);
  cert.product_term = prog.product_term;
  cert.basis_pos = prog.basis_pos;
  cert.basis_dec = prog.basis_dec;
  cert.gram_pos = sol.blocks[0];
  cert.gram_dec = sol.blocks[1];
  cert.eps1 = prog.spec.eps1;
  cert.eps2 = prog.spec.eps2;

  const Polynomial lie = lie_derivative(cert.v, prog.spec.system.f);
  const Polynomial mult = cert.p * prog.spec.system.h;
  const Polynomial supply = prog.spec.eps2 * cert.product_term;
  const Polynomial matched_pos = cert.v - prog.spec.eps1 * squared_norm_poly(n);
  const Polynomial matched_dec = -lie + mult - supply;
  cert.residual_pos = sos_detail::relative_residual(
      gram_polynomial(cert.basis_pos, cert.gram_pos, n), matched_pos,
      {cert.v.max_abs_coeff(), prog.spec.eps1});
  cert.residual_dec = sos_detail::relative_residual(
      gram_polynomial(cert.basis_dec, cert.gram_dec, n), matched_dec,
      {lie.max_abs_coeff(), mult.max_abs_coeff(), supply.max_abs_coeff()});

  cert.min_eig_pos =
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(cert.gram_pos,
                                                     Eigen::EigenvaluesOnly)
          .eigenvalues()
          .minCoeff();
  cert.min_eig_dec =
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(cert.gram_dec,
                                                     Eigen::EigenvaluesOnly)
          .eigenvalues()
          .minCoeff();

  const double res = std::max(cert.residual_pos, cert.residual_dec);
  const double eig = std::min(cert.min_eig_pos, cert.min_eig_dec);
  if (res <= 1e-6 && eig >= -1e-8)
    cert.status = CertStatus::Ok;
  else if (res <= 1e-4 && eig >= -1e-6)
    cert.status = CertStatus::Flagged;
  else
    cert.status = CertStatus::Invalid;
  return cert;
}

struct CertifyResult {
  SosProgram program;
  SdpSolution sdp;
  std::optional<LyapunovCertificate> certificate;
};

inline CertifyResult certify_agas(const SosProgramSpec& spec, const SdpOptions& opt = {}) {
  CertifyResult out;
  out.program = build_agas_program(spec);
  out.sdp = solve_sdp(out.program.sdp, opt);
  if (out.sdp.status == SdpStatus::Optimal)
    out.certificate = extract_certificate(out.program, out.sdp);
  return out;
}

}  // namespace sosstab
