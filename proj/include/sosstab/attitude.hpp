#pragma once

// Polynomial attitude dynamics on unit-vector and quaternion manifolds.
// Builds the two spacecraft case studies (an aerodynamically stabilized
// satellite with rate damping, and a gravity-gradient satellite under
// quaternion feedback) together with a planar toy system on the circle,
// each as a PolySystem whose states place the target equilibrium at the
// origin and scale the rates to order one.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <utility>
#include <vector>

#include "polynomial.hpp"
#include "sentman.hpp"
#include "system.hpp"

namespace sosstab {

struct PanelGeometry {
  double area = 0.0342;    // m^2, single plate
  double x_cp = -0.1310;   // m, plate center of pressure along the body x axis
  double r_perp = 0.3350;  // m, lateral offset of each plate
};

inline Eigen::Vector3d default_inertia() { return {0.0288, 0.0392, 0.0392}; }

namespace detail {

inline PolyVec poly_cross(const PolyVec& a, const PolyVec& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2],
          a[0] * b[1] - a[1] * b[0]};
}

inline PolyVec num_cross(const Eigen::Vector3d& a, const PolyVec& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2],
          a[0] * b[1] - a[1] * b[0]};
}

inline Polynomial poly_dot(const PolyVec& a, const PolyVec& b) {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

inline PolyVec diag_mul(const Eigen::Vector3d& d, const PolyVec& a) {
  return {d[0] * a[0], d[1] * a[1], d[2] * a[2]};
}

inline PolyVec poly_add(const PolyVec& a, const PolyVec& b) {
  return {a[0] + b[0], a[1] + b[1], a[2] + b[2]};
}

inline PolyVec poly_sub(const PolyVec& a, const PolyVec& b) {
  return {a[0] - b[0], a[1] - b[1], a[2] - b[2]};
}

inline PolyVec poly_smul(double s, const PolyVec& a) {
  return {s * a[0], s * a[1], s * a[2]};
}

}  // namespace detail

// Net aerodynamic torque on a four-plate cross, as a polynomial in the three
// body-frame components of the unit wind direction. Plates sit at +/- r_perp
// along the body y and z axes, offset by x_cp along x, with inward normals
// along the offset directions.
inline PolyVec aero_torque_poly(const SentmanFit& fit, const PanelGeometry& geom,
                                const AeroEnv& env) {
  const double pressure = 0.5 * env.density * env.speed * env.speed * geom.area;
  PolyVec w = {Polynomial::variable(3, 0), Polynomial::variable(3, 1),
               Polynomial::variable(3, 2)};
  struct Panel {
    Eigen::Vector3d r;
    Eigen::Vector3d n;
  };
  const std::array<Panel, 4> panels = {{
      {{geom.x_cp, geom.r_perp, 0.0}, {0.0, 1.0, 0.0}},
      {{geom.x_cp, -geom.r_perp, 0.0}, {0.0, -1.0, 0.0}},
      {{geom.x_cp, 0.0, geom.r_perp}, {0.0, 0.0, 1.0}},
      {{geom.x_cp, 0.0, -geom.r_perp}, {0.0, 0.0, -1.0}},
  }};
  PolyVec tau = {Polynomial(3), Polynomial(3), Polynomial(3)};
  for (const Panel& p : panels) {
    Polynomial c = p.n[0] * w[0] + p.n[1] * w[1] + p.n[2] * w[2];
    Polynomial h1 = compose_fit(fit.h1, c);
    Polynomial h2 = compose_fit(fit.h2, c);
    PolyVec force = {pressure * (h1 * p.n[0] - h2 * w[0]),
                     pressure * (h1 * p.n[1] - h2 * w[1]),
                     pressure * (h1 * p.n[2] - h2 * w[2])};
    tau = detail::poly_add(tau, detail::num_cross(p.r, force));
  }
  return tau;
}

struct AeroExampleParams {
  AeroEnv env;
  PanelGeometry geometry;
  Eigen::Vector3d inertia = default_inertia();
  double damping_gain = 0.016;
  double rate_scale = 20.0;
};

// Six-state system: shifted wind direction (x1..x3, so the stable attitude is
// the origin) and scaled body rates (x4..x6). The wind direction evolves by
// kinematics alone; the rates see Euler coupling, panel aerodynamics, and
// rate-proportional damping torque.
inline PolySystem build_aero_example(const AeroExampleParams& p = {}) {
  const int n = 6;
  const SentmanFit fit = fit_sentman(p.env);
  const PolyVec tau3 = aero_torque_poly(fit, p.geometry, p.env);

  // torque in the shifted coordinates, then widened to the full state space
  PolyVec tau;
  const Eigen::Matrix3d id = Eigen::Matrix3d::Identity();
  const Eigen::Vector3d e1(1.0, 0.0, 0.0);
  for (const Polynomial& t : tau3) tau.push_back(embed(substitute_affine(t, id, e1), n));

  PolyVec w = {Polynomial::constant(n, 1.0) + Polynomial::variable(n, 0),
               Polynomial::variable(n, 1), Polynomial::variable(n, 2)};
  PolyVec om = {(1.0 / p.rate_scale) * Polynomial::variable(n, 3),
                (1.0 / p.rate_scale) * Polynomial::variable(n, 4),
                (1.0 / p.rate_scale) * Polynomial::variable(n, 5)};

  PolyVec wdot = detail::poly_cross(w, om);
  PolyVec euler = detail::poly_cross(om, detail::diag_mul(p.inertia, om));

  PolyVec f;
  for (int i = 0; i < 3; ++i) f.push_back(wdot[i]);
  for (int i = 0; i < 3; ++i) {
    Polynomial omdot =
        (1.0 / p.inertia[i]) * (tau[i] - euler[i]) - p.damping_gain * om[i];
    f.push_back(p.rate_scale * omdot);
  }
  f = chop(f, 1e-12);

  PolySystem sys;
  sys.name = "aero";
  sys.f = std::move(f);
  sys.h = 2.0 * Polynomial::variable(n, 0);
  for (int i = 0; i < 3; ++i) {
    Polynomial xi = Polynomial::variable(n, i);
    sys.h += xi * xi;
  }
  sys.equilibria = {Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n)};
  sys.equilibria[1][0] = -2.0;
  sys.scale = Eigen::VectorXd::Ones(n);
  sys.scale.tail<3>().setConstant(p.rate_scale);
  sys.shift = Eigen::VectorXd::Zero(n);
  sys.shift[0] = 1.0;
  sys.sphere_dim = 3;
  return sys;
}

struct QuatExampleParams {
  Eigen::Vector3d inertia = default_inertia();
  double kp = 0.0064;
  double kd = 0.08;
  double orbit_rate = 0.0011;  // rad / s
  double rate_scale = 15.0;
};

// Seven-state system: shifted quaternion (x1..x4, identity attitude at the
// origin) and scaled body rates (x5..x7). Includes gravity-gradient torque,
// the orbit-rate coupling of an Earth-pointing reference, and proportional
// plus derivative attitude feedback.
inline PolySystem build_quaternion_example(const QuatExampleParams& p = {}) {
  const int n = 7;
  Polynomial q0 = Polynomial::constant(n, 1.0) + Polynomial::variable(n, 0);
  PolyVec qv = {Polynomial::variable(n, 1), Polynomial::variable(n, 2),
                Polynomial::variable(n, 3)};
  PolyVec om = {(1.0 / p.rate_scale) * Polynomial::variable(n, 4),
                (1.0 / p.rate_scale) * Polynomial::variable(n, 5),
                (1.0 / p.rate_scale) * Polynomial::variable(n, 6)};

  // columns of the orbit-to-body direction cosine matrix
  // T = (2 q0^2 - 1) I + 2 (qv qv' - q0 [qv x])
  Polynomial diag = 2.0 * q0 * q0 - Polynomial::constant(n, 1.0);
  const std::array<PolyVec, 3> skew_cols = {{
      {Polynomial(n), qv[2], -qv[1]},
      {-qv[2], Polynomial(n), qv[0]},
      {qv[1], -qv[0], Polynomial(n)},
  }};
  auto dcm_col = [&](int j) {
    PolyVec col = {2.0 * qv[0] * qv[j], 2.0 * qv[1] * qv[j], 2.0 * qv[2] * qv[j]};
    col[j] += diag;
    return detail::poly_sub(col, detail::poly_smul(2.0, {q0 * skew_cols[j][0],
                                                         q0 * skew_cols[j][1],
                                                         q0 * skew_cols[j][2]}));
  };
  const PolyVec y_orbit = dcm_col(1);
  const PolyVec z_orbit = dcm_col(2);

  Polynomial qdot0 = -0.5 * detail::poly_dot(om, qv);
  PolyVec omqv = detail::poly_cross(om, qv);
  PolyVec qdotv = {0.5 * (q0 * om[0] - omqv[0]), 0.5 * (q0 * om[1] - omqv[1]),
                   0.5 * (q0 * om[2] - omqv[2])};

  const Eigen::Vector3d th = p.inertia;
  PolyVec tau_gg = detail::poly_smul(
      3.0 * p.orbit_rate * p.orbit_rate,
      detail::poly_cross(z_orbit, detail::diag_mul(th, z_orbit)));
  PolyVec tau_c = detail::poly_add(detail::poly_smul(-p.kp, detail::diag_mul(th, qv)),
                                   detail::poly_smul(-p.kd, detail::diag_mul(th, om)));
  PolyVec vrel = detail::poly_sub(om, detail::poly_smul(p.orbit_rate, y_orbit));
  PolyVec rhs = detail::poly_sub(
      detail::poly_smul(-1.0, detail::poly_cross(vrel, detail::diag_mul(th, vrel))),
      detail::poly_smul(p.orbit_rate,
                        detail::diag_mul(th, detail::poly_cross(om, y_orbit))));
  rhs = detail::poly_add(rhs, detail::poly_add(tau_c, tau_gg));

  PolyVec f;
  f.push_back(qdot0);
  for (int i = 0; i < 3; ++i) f.push_back(qdotv[i]);
  for (int i = 0; i < 3; ++i)
    f.push_back(p.rate_scale * ((1.0 / th[i]) * rhs[i]));
  f = chop(f, 1e-12);

  PolySystem sys;
  sys.name = "quaternion";
  sys.f = std::move(f);
  sys.h = 2.0 * Polynomial::variable(n, 0);
  for (int i = 0; i < 4; ++i) {
    Polynomial xi = Polynomial::variable(n, i);
    sys.h += xi * xi;
  }
  sys.equilibria = {Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n)};
  sys.equilibria[1][0] = -2.0;
  sys.scale = Eigen::VectorXd::Ones(n);
  sys.scale.tail<3>().setConstant(p.rate_scale);
  sys.shift = Eigen::VectorXd::Zero(n);
  sys.shift[0] = 1.0;
  sys.sphere_dim = 4;
  return sys;
}

// Planar toy: rotation on the unit circle with one stable and one unstable
// equilibrium, written in coordinates shifted so the stable point is the
// origin. Its flow has a closed-form solution, which makes it the reference
// system for integrator and certificate sanity checks.
inline PolySystem circle_example() {
  const int n = 2;
  Polynomial x1 = Polynomial::variable(n, 0);
  Polynomial x2 = Polynomial::variable(n, 1);
  PolySystem sys;
  sys.name = "circle";
  sys.f = {x2 * x2, -1.0 * (Polynomial::constant(n, 1.0) + x1) * x2};
  sys.h = 2.0 * x1 + x1 * x1 + x2 * x2;
  sys.equilibria = {Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n)};
  sys.equilibria[1][0] = -2.0;
  sys.scale = Eigen::VectorXd::Ones(n);
  sys.shift = Eigen::VectorXd::Zero(n);
  sys.shift[0] = 1.0;
  sys.sphere_dim = 2;
  return sys;
}

inline Eigen::MatrixXd system_jacobian(const PolySystem& sys, const Eigen::VectorXd& x) {
  const int n = sys.nvars();
  Eigen::MatrixXd j(n, n);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < n; ++k) j(i, k) = differentiate(sys.f[i], k).evaluate(x);
  return j;
}

// Eigenvalues of the dynamics linearized within the tangent space of the
// constraint surface at an equilibrium, sorted by real then imaginary part.
inline Eigen::VectorXcd tangent_jacobian_eigs(const PolySystem& sys,
                                              const Eigen::VectorXd& xeq) {
  const int n = sys.nvars();
  Eigen::VectorXd grad(n);
  for (int k = 0; k < n; ++k) grad[k] = differentiate(sys.h, k).evaluate(xeq);
  const double gn = grad.norm();
  if (gn < 1e-12)
    throw std::invalid_argument("tangent_jacobian_eigs: constraint gradient vanishes");
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(grad / gn);
  Eigen::MatrixXd q = qr.householderQ();
  Eigen::MatrixXd basis = q.rightCols(n - 1);
  Eigen::MatrixXd jt = basis.transpose() * system_jacobian(sys, xeq) * basis;
  Eigen::VectorXcd eigs = Eigen::EigenSolver<Eigen::MatrixXd>(jt).eigenvalues();
  std::vector<std::complex<double>> v(eigs.data(), eigs.data() + eigs.size());
  std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) {
    if (a.real() != b.real()) return a.real() < b.real();
    return a.imag() < b.imag();
  });
  for (int i = 0; i < eigs.size(); ++i) eigs[i] = v[i];
  return eigs;
}

inline int count_unstable(const Eigen::VectorXcd& eigs, double tol = 1e-9) {
  int c = 0;
  for (int i = 0; i < eigs.size(); ++i)
    if (eigs[i].real() > tol) ++c;
  return c;
}

}  // namespace sosstab
