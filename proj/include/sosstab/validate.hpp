#pragma once

// Independent checks of a Lyapunov certificate: Monte Carlo sampling of the
// positivity and decrease conditions on and off the constraint manifold, and
// a fixed-step integrator for following trajectories of the closed-loop
// system while monitoring the certificate along the way.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <vector>

#include "polynomial.hpp"
#include "sos.hpp"
#include "system.hpp"

namespace sosstab {

namespace rnd {

// Draws built directly from the raw engine output so streams are identical
// across standard library implementations.
inline double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double symmetric_uniform(std::mt19937_64& rng, double halfwidth) {
  return halfwidth * (2.0 * unit_uniform(rng) - 1.0);
}

inline double gaussian(std::mt19937_64& rng) {
  const double u1 = unit_uniform(rng);
  const double u2 = unit_uniform(rng);
  return std::sqrt(-2.0 * std::log1p(-u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace rnd

// Random states on the constraint manifold: the leading sphere_dim components
// are a uniform unit-sphere direction shifted so the nominal equilibrium sits
// at the origin, the remaining components are rates drawn uniformly from a
// symmetric box.
inline std::vector<Eigen::VectorXd> sample_manifold(const PolySystem& sys, int count,
                                                    double rate_box, std::uint64_t seed) {
  if (count < 0) throw std::invalid_argument("sample_manifold: negative count");
  const int n = sys.nvars();
  const int m = sys.sphere_dim;
  if (m < 2 || m > n) throw std::invalid_argument("sample_manifold: bad sphere dimension");
  std::mt19937_64 rng(seed);
  std::vector<Eigen::VectorXd> out;
  out.reserve(count);
  for (int s = 0; s < count; ++s) {
    Eigen::VectorXd dir(m);
    double nrm = 0.0;
    do {
      for (int i = 0; i < m; ++i) dir[i] = rnd::gaussian(rng);
      nrm = dir.norm();
    } while (nrm < 1e-12);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    x.head(m) = dir / nrm;
    x[0] -= 1.0;
    for (int i = m; i < n; ++i) x[i] = rnd::symmetric_uniform(rng, rate_box);
    out.push_back(std::move(x));
  }
  return out;
}

struct ValidationOptions {
  int samples = 10000;          // manifold points
  double rate_box = 1.0;        // halfwidth of the rate sampling box
  std::uint64_t seed = 1;
  int ambient_samples = 10000;  // points in the ambient ball
  double ambient_radius = 10.0;
  double decrease_slack = 1e-7;
  double gram_eig_floor = -1e-8;
};

struct ValidationReport {
  int manifold_samples = 0;
  int ambient_samples = 0;
  double max_h_abs = 0;                // constraint residual over manifold samples
  double min_v = 0;                    // V over manifold samples away from the origin
  double min_v_margin = 0;             // normalized min of V - eps1 |x|^2, ambient
  double max_decrease_violation = 0;   // max of <grad V, f> + eps2 prod, manifold
  double min_gram_eig = 0;
  bool positivity_ok = false;
  bool decrease_ok = false;
  bool gram_ok = false;
  bool passed = false;
};

inline ValidationReport check_conditions(const PolySystem& sys,
                                         const LyapunovCertificate& cert,
                                         const ValidationOptions& opt = {}) {
  const int n = sys.nvars();
  if (cert.v.nvars() != n)
    throw std::invalid_argument("check_conditions: certificate does not match system");
  ValidationReport rep;
  rep.manifold_samples = opt.samples;
  rep.ambient_samples = opt.ambient_samples;

  const Polynomial lie = lie_derivative(cert.v, sys.f);
  const Polynomial norm2 = squared_norm_poly(n);
  const int half_v = (cert.v.degree() + 1) / 2;

  rep.min_v = std::numeric_limits<double>::infinity();
  rep.max_decrease_violation = -std::numeric_limits<double>::infinity();
  for (const Eigen::VectorXd& x :
       sample_manifold(sys, opt.samples, opt.rate_box, opt.seed)) {
    rep.max_h_abs = std::max(rep.max_h_abs, std::abs(sys.h.evaluate(x)));
    if (x.norm() > 1e-8) rep.min_v = std::min(rep.min_v, cert.v.evaluate(x));
    const double viol = lie.evaluate(x) + cert.eps2 * cert.product_term.evaluate(x);
    rep.max_decrease_violation = std::max(rep.max_decrease_violation, viol);
  }

  // ambient spot check of V >= eps1 |x|^2, normalized by the certificate's
  // natural growth so the tolerance is meaningful at every radius
  std::mt19937_64 rng(opt.seed + 0x9e3779b97f4a7c15ull);
  rep.min_v_margin = std::numeric_limits<double>::infinity();
  for (int s = 0; s < opt.ambient_samples; ++s) {
    Eigen::VectorXd x(n);
    double nrm = 0.0;
    do {
      for (int i = 0; i < n; ++i) x[i] = rnd::gaussian(rng);
      nrm = x.norm();
    } while (nrm < 1e-12);
    const double radius =
        opt.ambient_radius * std::pow(rnd::unit_uniform(rng), 1.0 / n);
    x *= radius / nrm;
    const double margin = cert.v.evaluate(x) - cert.eps1 * norm2.evaluate(x);
    const double growth = std::pow(1.0 + x.squaredNorm(), half_v);
    rep.min_v_margin = std::min(rep.min_v_margin, margin / growth);
  }

  rep.positivity_ok = rep.min_v > 0.0 && rep.min_v_margin >= -opt.decrease_slack;
  rep.decrease_ok = rep.max_decrease_violation <= opt.decrease_slack;
  rep.min_gram_eig = std::min(cert.min_eig_pos, cert.min_eig_dec);
  rep.gram_ok = rep.min_gram_eig >= opt.gram_eig_floor;
  rep.passed = rep.positivity_ok && rep.decrease_ok && rep.gram_ok &&
               rep.max_h_abs <= 1e-9;
  return rep;
}

struct SimOptions {
  double dt = 0.01;
  double t_end = 10.0;
  bool renormalize = true;  // project the sphere components back after each step
};

struct Trajectory {
  std::vector<double> t;
  std::vector<Eigen::VectorXd> x;
  double max_constraint_drift = 0.0;  // |h| right after a raw step
};

// Classical fourth-order Runge-Kutta with fixed step; the sphere components
// are renormalized after every step so long integrations stay on the
// manifold, and the drift before projection is recorded as a diagnostic.
inline Trajectory simulate(const PolySystem& sys, const Eigen::VectorXd& x0,
                           const SimOptions& opt = {}) {
  const int n = sys.nvars();
  if (x0.size() != n) throw std::invalid_argument("simulate: state size mismatch");
  if (opt.dt <= 0.0 || opt.t_end < 0.0)
    throw std::invalid_argument("simulate: nonpositive step or horizon");
  const int m = sys.sphere_dim;
  const int steps = static_cast<int>(std::llround(opt.t_end / opt.dt));

  Trajectory traj;
  traj.t.reserve(steps + 1);
  traj.x.reserve(steps + 1);
  Eigen::VectorXd x = x0;
  traj.t.push_back(0.0);
  traj.x.push_back(x);
  for (int s = 1; s <= steps; ++s) {
    const Eigen::VectorXd k1 = evaluate(sys.f, x);
    const Eigen::VectorXd k2 = evaluate(sys.f, x + 0.5 * opt.dt * k1);
    const Eigen::VectorXd k3 = evaluate(sys.f, x + 0.5 * opt.dt * k2);
    const Eigen::VectorXd k4 = evaluate(sys.f, x + opt.dt * k3);
    x += opt.dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    traj.max_constraint_drift =
        std::max(traj.max_constraint_drift, std::abs(sys.h.evaluate(x)));
    if (opt.renormalize && m >= 2) {
      Eigen::VectorXd sphere = x.head(m);
      sphere[0] += 1.0;
      const double nrm = sphere.norm();
      if (nrm > 1e-12) {
        sphere /= nrm;
        sphere[0] -= 1.0;
        x.head(m) = sphere;
      }
    }
    traj.t.push_back(opt.dt * s);
    traj.x.push_back(x);
  }
  return traj;
}

inline std::vector<double> values_along(const Polynomial& p, const Trajectory& traj) {
  std::vector<double> out;
  out.reserve(traj.x.size());
  for (const Eigen::VectorXd& x : traj.x) out.push_back(p.evaluate(x));
  return out;
}

}  // namespace sosstab
