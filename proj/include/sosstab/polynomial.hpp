#pragma once

// Sparse multivariate polynomial arithmetic over double coefficients.
//
// Terms are keyed by exponent vectors and kept in graded lexicographic
// order (total degree first, then lexicographic on the exponent tuple),
// so iteration, printing, serialization and evaluation all traverse the
// same deterministic sequence. Coefficients that cancel to exactly 0.0
// are erased immediately; near-zero noise is only removed by an explicit
// chop() call.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace sosstab {

using Exponents = std::vector<int>;

inline int total_degree(const Exponents& e) {
  int d = 0;
  for (int k : e) d += k;
  return d;
}

struct GradedLexLess {
  bool operator()(const Exponents& a, const Exponents& b) const {
    const int da = total_degree(a), db = total_degree(b);
    if (da != db) return da < db;
    return a < b;
  }
};

class Polynomial {
 public:
  using TermMap = std::map<Exponents, double, GradedLexLess>;

  explicit Polynomial(int nvars) : nvars_(nvars) {
    if (nvars < 1) throw std::invalid_argument("Polynomial: nvars must be >= 1");
  }

  static Polynomial constant(int nvars, double c) {
    Polynomial p(nvars);
    p.add_term(Exponents(nvars, 0), c);
    return p;
  }

  static Polynomial variable(int nvars, int i) {
    Polynomial p(nvars);
    Exponents e(nvars, 0);
    p.check_var(i);
    e[i] = 1;
    p.add_term(e, 1.0);
    return p;
  }

  static Polynomial monomial(const Exponents& e, double c) {
    Polynomial p(static_cast<int>(e.size()));
    p.add_term(e, c);
    return p;
  }

  int nvars() const { return nvars_; }
  const TermMap& terms() const { return terms_; }
  bool is_zero() const { return terms_.empty(); }

  // degree of the zero polynomial is reported as -1
  int degree() const { return terms_.empty() ? -1 : total_degree(terms_.rbegin()->first); }

  double coeff(const Exponents& e) const {
    auto it = terms_.find(e);
    return it == terms_.end() ? 0.0 : it->second;
  }

  double max_abs_coeff() const {
    double m = 0.0;
    for (const auto& [e, c] : terms_) m = std::max(m, std::abs(c));
    return m;
  }

  void add_term(const Exponents& e, double c) {
    if (static_cast<int>(e.size()) != nvars_)
      throw std::invalid_argument("Polynomial: exponent vector has wrong length");
    for (int k : e)
      if (k < 0) throw std::invalid_argument("Polynomial: negative exponent");
    if (c == 0.0) return;
    auto [it, inserted] = terms_.emplace(e, c);
    if (!inserted) {
      it->second += c;
      if (it->second == 0.0) terms_.erase(it);
    }
  }

  Polynomial& operator+=(const Polynomial& o) {
    check_same(o);
    for (const auto& [e, c] : o.terms_) add_term(e, c);
    return *this;
  }

  Polynomial& operator-=(const Polynomial& o) {
    check_same(o);
    for (const auto& [e, c] : o.terms_) add_term(e, -c);
    return *this;
  }

  Polynomial& operator*=(double s) {
    if (s == 0.0) {
      terms_.clear();
      return *this;
    }
    for (auto& [e, c] : terms_) c *= s;
    return *this;
  }

  friend Polynomial operator+(Polynomial a, const Polynomial& b) { return a += b; }
  friend Polynomial operator-(Polynomial a, const Polynomial& b) { return a -= b; }
  friend Polynomial operator*(Polynomial a, double s) { return a *= s; }
  friend Polynomial operator*(double s, Polynomial a) { return a *= s; }
  friend Polynomial operator-(Polynomial a) { return a *= -1.0; }

  friend Polynomial operator*(const Polynomial& a, const Polynomial& b) {
    a.check_same(b);
    Polynomial r(a.nvars_);
    Exponents e(a.nvars_);
    for (const auto& [ea, ca] : a.terms_) {
      for (const auto& [eb, cb] : b.terms_) {
        for (int i = 0; i < a.nvars_; ++i) e[i] = ea[i] + eb[i];
        r.add_term(e, ca * cb);
      }
    }
    return r;
  }

  double evaluate(const Eigen::VectorXd& x) const {
    if (x.size() != nvars_)
      throw std::invalid_argument("Polynomial::evaluate: point has wrong dimension");
    double sum = 0.0;
    for (const auto& [e, c] : terms_) {
      double t = c;
      for (int i = 0; i < nvars_; ++i) t *= int_pow(x[i], e[i]);
      sum += t;
    }
    return sum;
  }

 private:
  void check_same(const Polynomial& o) const {
    if (o.nvars_ != nvars_)
      throw std::invalid_argument("Polynomial: operand variable counts differ");
  }
  void check_var(int i) const {
    if (i < 0 || i >= nvars_) throw std::invalid_argument("Polynomial: variable index out of range");
  }
  static double int_pow(double x, int k) {
    double r = 1.0;
    while (k > 0) {
      if (k & 1) r *= x;
      x *= x;
      k >>= 1;
    }
    return r;
  }

  int nvars_;
  TermMap terms_;
};

using PolyVec = std::vector<Polynomial>;
using MonomialBasis = std::vector<Exponents>;

inline Polynomial differentiate(const Polynomial& p, int var) {
  if (var < 0 || var >= p.nvars())
    throw std::invalid_argument("differentiate: variable index out of range");
  Polynomial r(p.nvars());
  Exponents e(p.nvars());
  for (const auto& [ep, c] : p.terms()) {
    if (ep[var] == 0) continue;
    e = ep;
    e[var] -= 1;
    r.add_term(e, c * ep[var]);
  }
  return r;
}

// Lie derivative <grad V, f> of a scalar function along a vector field.
inline Polynomial lie_derivative(const Polynomial& v, const PolyVec& f) {
  if (static_cast<int>(f.size()) != v.nvars())
    throw std::invalid_argument("lie_derivative: field dimension != nvars");
  Polynomial r(v.nvars());
  for (int i = 0; i < v.nvars(); ++i) r += differentiate(v, i) * f[i];
  return r;
}

inline Eigen::VectorXd evaluate(const PolyVec& f, const Eigen::VectorXd& x) {
  Eigen::VectorXd y(f.size());
  for (size_t i = 0; i < f.size(); ++i) y[i] = f[i].evaluate(x);
  return y;
}

namespace detail {
inline void fill_compositions(int pos, int remaining, Exponents& e, MonomialBasis& out) {
  const int n = static_cast<int>(e.size());
  if (pos == n - 1) {
    e[pos] = remaining;
    out.push_back(e);
    e[pos] = 0;
    return;
  }
  for (int k = 0; k <= remaining; ++k) {
    e[pos] = k;
    fill_compositions(pos + 1, remaining - k, e, out);
  }
  e[pos] = 0;
}
}  // namespace detail

// All exponent vectors with total degree <= max_degree, graded-lex ordered.
inline MonomialBasis monomial_basis(int nvars, int max_degree) {
  if (nvars < 1 || max_degree < 0)
    throw std::invalid_argument("monomial_basis: need nvars >= 1 and max_degree >= 0");
  MonomialBasis basis;
  Exponents e(nvars, 0);
  for (int d = 0; d <= max_degree; ++d) detail::fill_compositions(0, d, e, basis);
  return basis;
}

// q(x) = p(A x + b). A must be square and invertible.
inline Polynomial substitute_affine(const Polynomial& p, const Eigen::MatrixXd& a,
                                    const Eigen::VectorXd& b) {
  const int n = p.nvars();
  if (a.rows() != n || a.cols() != n || b.size() != n)
    throw std::invalid_argument("substitute_affine: A must be nvars x nvars, b length nvars");
  Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
  if (!lu.isInvertible())
    throw std::invalid_argument("substitute_affine: A is singular");

  PolyVec lin;
  lin.reserve(n);
  for (int i = 0; i < n; ++i) {
    Polynomial li(n);
    for (int j = 0; j < n; ++j)
      if (a(i, j) != 0.0) li += a(i, j) * Polynomial::variable(n, j);
    if (b[i] != 0.0) li += Polynomial::constant(n, b[i]);
    lin.push_back(li);
  }

  // cache powers of each substituted variable up to its maximum exponent
  std::vector<int> max_exp(n, 0);
  for (const auto& [e, c] : p.terms())
    for (int i = 0; i < n; ++i) max_exp[i] = std::max(max_exp[i], e[i]);
  std::vector<PolyVec> powers(n);
  for (int i = 0; i < n; ++i) {
    powers[i].push_back(Polynomial::constant(n, 1.0));
    for (int k = 1; k <= max_exp[i]; ++k) powers[i].push_back(powers[i][k - 1] * lin[i]);
  }

  Polynomial r(n);
  for (const auto& [e, c] : p.terms()) {
    Polynomial t = Polynomial::constant(n, c);
    for (int i = 0; i < n; ++i)
      if (e[i] > 0) t = t * powers[i][e[i]];
    r += t;
  }
  return r;
}

// embed a polynomial into a larger variable set, keeping variable indices
inline Polynomial embed(const Polynomial& p, int nvars_new) {
  if (nvars_new < p.nvars())
    throw std::invalid_argument("embed: target variable count too small");
  Polynomial r(nvars_new);
  Exponents e(nvars_new, 0);
  for (const auto& [ep, c] : p.terms()) {
    std::fill(e.begin(), e.end(), 0);
    std::copy(ep.begin(), ep.end(), e.begin());
    r.add_term(e, c);
  }
  return r;
}

// remove terms with |coeff| < tol
inline Polynomial chop(const Polynomial& p, double tol = 1e-12) {
  Polynomial r(p.nvars());
  for (const auto& [e, c] : p.terms())
    if (std::abs(c) >= tol) r.add_term(e, c);
  return r;
}

inline PolyVec chop(const PolyVec& f, double tol = 1e-12) {
  PolyVec r;
  r.reserve(f.size());
  for (const auto& p : f) r.push_back(chop(p, tol));
  return r;
}

inline std::string to_string(const Polynomial& p, const std::string& var = "x") {
  if (p.is_zero()) return "0";
  std::string s;
  bool first = true;
  for (const auto& [e, c] : p.terms()) {
    if (!first) s += c < 0 ? " - " : " + ";
    else if (c < 0) s += "-";
    first = false;
    std::string mono;
    for (size_t i = 0; i < e.size(); ++i) {
      if (e[i] == 0) continue;
      if (!mono.empty()) mono += "*";
      mono += var + std::to_string(i + 1);
      if (e[i] > 1) mono += "^" + std::to_string(e[i]);
    }
    const double ac = std::abs(c);
    if (mono.empty()) s += std::to_string(ac);
    else if (ac == 1.0) s += mono;
    else s += std::to_string(ac) + "*" + mono;
  }
  return s;
}

}  // namespace sosstab
