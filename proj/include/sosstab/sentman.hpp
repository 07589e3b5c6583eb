#pragma once

// Free-molecular flow force coefficients for a flat plate, after Sentman,
// as functions of the cosine of the angle between the inward surface normal
// and the incoming stream, plus least-squares polynomial surrogates of those
// coefficients over the full incidence range [-1, 1]. The surrogates are what
// turn panel aerodynamics into polynomial vector fields.

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "polynomial.hpp"

namespace sosstab {

struct AeroEnv {
  double density = 1.88e-11;        // kg / m^3
  double speed = 7725.84;           // m / s, magnitude of the relative wind
  double speed_ratio = 7.86;        // wind speed over most probable thermal speed
  double accommodation = 0.95;      // energy accommodation coefficient
  double wall_temp = 300.0;         // K
  double particle_mass = 2.65e-26;  // kg, mean molecular mass
  double boltzmann = 1.380649e-23;  // J / K
};

// Ratio of reemission to freestream kinetic temperature for one plate side.
// Blends full accommodation to the wall with specular-like retention of the
// incident energy.
inline double exit_temperature_ratio(double cosine, const AeroEnv& env) {
  const double s = env.speed_ratio;
  const double wall = env.accommodation *
                      (2.0 * env.boltzmann * env.wall_temp /
                       (env.particle_mass * env.speed * env.speed)) *
                      s * s;
  const double u = s * cosine;
  const double num = u * std::sqrt(std::numbers::pi) * std::erfc(-u);
  const double den = std::exp(-u * u) + num;
  return wall + (1.0 - env.accommodation) * (1.0 + 0.5 * s * s + 0.25 * num / den);
}

struct SentmanCoeffs {
  double h1 = 0;  // multiplies the surface normal
  double h2 = 0;  // multiplies the wind direction
};

inline SentmanCoeffs sentman_coeffs(double cosine, const AeroEnv& env) {
  const double s = env.speed_ratio;
  const double u = s * cosine;
  const double root_pi = std::sqrt(std::numbers::pi);
  const double tm = exit_temperature_ratio(cosine, env) - exit_temperature_ratio(-cosine, env);
  const double tp = exit_temperature_ratio(cosine, env) + exit_temperature_ratio(-cosine, env);
  SentmanCoeffs out;
  out.h2 = 2.0 / (root_pi * s) * std::exp(-u * u) + 2.0 * cosine * std::erf(u);
  out.h1 = -1.0 / (2.0 * s * s) * std::exp(-u * u) * tm -
           std::erf(u) * (1.0 / (s * s) + root_pi * cosine / (2.0 * s) * tm) -
           root_pi * cosine / (2.0 * s) * tp;
  return out;
}

struct SentmanFit {
  Eigen::VectorXd h1;  // coefficients of 1, c, c^2, ... for the normal term
  Eigen::VectorXd h2;  // same for the wind term
};

// Dense least-squares fit on a uniform cosine grid. The normal coefficient is
// odd and nearly linear, the wind coefficient even and quartic-dominated, so
// low fit degrees already track the exact curves closely.
inline SentmanFit fit_sentman(const AeroEnv& env, int deg_h1 = 2, int deg_h2 = 4,
                              int npoints = 401) {
  if (npoints < std::max(deg_h1, deg_h2) + 1)
    throw std::invalid_argument("fit_sentman: not enough grid points");
  Eigen::VectorXd h1v(npoints), h2v(npoints);
  Eigen::MatrixXd v1(npoints, deg_h1 + 1), v2(npoints, deg_h2 + 1);
  for (int i = 0; i < npoints; ++i) {
    const double c = -1.0 + 2.0 * i / (npoints - 1);
    const SentmanCoeffs sc = sentman_coeffs(c, env);
    h1v[i] = sc.h1;
    h2v[i] = sc.h2;
    double pw = 1.0;
    for (int k = 0; k < std::max(deg_h1, deg_h2) + 1; ++k) {
      if (k <= deg_h1) v1(i, k) = pw;
      if (k <= deg_h2) v2(i, k) = pw;
      pw *= c;
    }
  }
  SentmanFit fit;
  fit.h1 = Eigen::ColPivHouseholderQR<Eigen::MatrixXd>(v1).solve(h1v);
  fit.h2 = Eigen::ColPivHouseholderQR<Eigen::MatrixXd>(v2).solve(h2v);
  return fit;
}

inline double eval_fit(const Eigen::VectorXd& coef, double c) {
  double sum = 0.0, pw = 1.0;
  for (int k = 0; k < coef.size(); ++k) {
    sum += coef[k] * pw;
    pw *= c;
  }
  return sum;
}

// Composes a fitted univariate polynomial with a polynomial argument.
inline Polynomial compose_fit(const Eigen::VectorXd& coef, const Polynomial& arg) {
  Polynomial r = Polynomial::constant(arg.nvars(), coef.size() > 0 ? coef[0] : 0.0);
  Polynomial pw = Polynomial::constant(arg.nvars(), 1.0);
  for (int k = 1; k < coef.size(); ++k) {
    pw = pw * arg;
    r += coef[k] * pw;
  }
  return r;
}

}  // namespace sosstab
