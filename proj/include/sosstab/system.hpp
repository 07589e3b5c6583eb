#pragma once

// Polynomial ODE restricted to a manifold cut out by a single scalar
// constraint h(x) = 0. States live in transformed coordinates
// x = S (xbar - xbar*), where xbar* is the primary equilibrium: the first
// sphere_dim coordinates are a shifted unit-direction block (the constraint
// sphere passes through the origin after the shift) and the remaining
// coordinates are unconstrained rates.

#include "polynomial.hpp"

#include <string>
#include <vector>

namespace sosstab {

struct PolySystem {
  std::string name;
  PolyVec f;                                // dynamics, one polynomial per state
  Polynomial h = Polynomial(1);             // manifold constraint
  std::vector<Eigen::VectorXd> equilibria;  // transformed coordinates; first entry is 0
  Eigen::VectorXd scale;                    // diagonal of S
  Eigen::VectorXd shift;                    // xbar* subtracted before scaling
  int sphere_dim = 0;                       // leading coordinates on the constraint sphere

  int nvars() const { return static_cast<int>(f.size()); }
};

// Checks that the declared equilibria actually sit on the manifold and are
// stationary points of f. Throws std::invalid_argument on violation.
inline void validate_system(const PolySystem& sys, double tol = 1e-9) {
  const int n = sys.nvars();
  if (n == 0) throw std::invalid_argument(sys.name + ": system has no states");
  if (sys.h.nvars() != n)
    throw std::invalid_argument(sys.name + ": constraint variable count mismatch");
  if (sys.sphere_dim < 2 || sys.sphere_dim > n)
    throw std::invalid_argument(sys.name + ": sphere_dim out of range");
  if (sys.equilibria.empty() || sys.equilibria.front().norm() != 0.0)
    throw std::invalid_argument(sys.name + ": first equilibrium must be the origin");
  for (const auto& xs : sys.equilibria) {
    if (xs.size() != n)
      throw std::invalid_argument(sys.name + ": equilibrium dimension mismatch");
    if (std::abs(sys.h.evaluate(xs)) > tol)
      throw std::invalid_argument(sys.name + ": equilibrium off the manifold");
    if (evaluate(sys.f, xs).lpNorm<Eigen::Infinity>() > tol)
      throw std::invalid_argument(sys.name + ": equilibrium is not stationary");
  }
}

}  // namespace sosstab
