#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <numbers>

#include "erf_oracle.hpp"
#include "sosstab/attitude.hpp"
#include "sosstab/polynomial.hpp"
#include "sosstab/sentman.hpp"
#include "sosstab/system.hpp"

using namespace sosstab;

namespace {

Exponents exps(std::initializer_list<int> e) { return Exponents(e); }

// Recomputes the plate coefficients through the reference error function so
// the production path through std::erf / std::erfc has an independent check.
SentmanCoeffs oracle_coeffs(double cosine, const AeroEnv& env) {
  const double s = env.speed_ratio;
  const double root_pi = std::sqrt(std::numbers::pi);
  auto ratio = [&](double c) {
    const double wall = env.accommodation *
                        (2.0 * env.boltzmann * env.wall_temp /
                         (env.particle_mass * env.speed * env.speed)) *
                        s * s;
    const double u = s * c;
    const double num = u * root_pi * erf_oracle::erfc(-u);
    const double den = std::exp(-u * u) + num;
    return wall + (1.0 - env.accommodation) * (1.0 + 0.5 * s * s + 0.25 * num / den);
  };
  const double u = s * cosine;
  const double tm = ratio(cosine) - ratio(-cosine);
  const double tp = ratio(cosine) + ratio(-cosine);
  SentmanCoeffs out;
  out.h2 = 2.0 / (root_pi * s) * std::exp(-u * u) + 2.0 * cosine * erf_oracle::erf(u);
  out.h1 = -1.0 / (2.0 * s * s) * std::exp(-u * u) * tm -
           erf_oracle::erf(u) * (1.0 / (s * s) + root_pi * cosine / (2.0 * s) * tm) -
           root_pi * cosine / (2.0 * s) * tp;
  return out;
}

}  // namespace

TEST_CASE("reference error function matches the standard library") {
  for (int i = 0; i <= 1000; ++i) {
    const double x = -8.0 + 16.0 * i / 1000.0;
    REQUIRE(std::abs(erf_oracle::erf(x) - std::erf(x)) < 1e-14);
    REQUIRE(std::abs(erf_oracle::erfc(x) - std::erfc(x)) < 1e-14);
  }
  REQUIRE(std::abs(erf_oracle::erf(0.0)) == 0.0);
  REQUIRE(erf_oracle::erfc(0.0) == Catch::Approx(1.0).margin(1e-15));
}

TEST_CASE("plate coefficients at reference incidences") {
  const AeroEnv env;
  const SentmanCoeffs head_on = sentman_coeffs(1.0, env);
  REQUIRE(head_on.h2 == Catch::Approx(2.0).margin(1e-12));
  REQUIRE(head_on.h1 == Catch::Approx(-0.4478812737583287).margin(1e-12));

  const SentmanCoeffs grazing = sentman_coeffs(0.0, env);
  REQUIRE(grazing.h1 == 0.0);
  const double expected = 2.0 / (std::sqrt(std::numbers::pi) * env.speed_ratio);
  REQUIRE(grazing.h2 == Catch::Approx(expected).margin(1e-15));
  REQUIRE(grazing.h2 == Catch::Approx(0.143559690470167).margin(1e-12));
}

TEST_CASE("plate coefficients have odd and even symmetry") {
  const AeroEnv env;
  for (int i = 0; i <= 100; ++i) {
    const double c = -1.0 + 2.0 * i / 100.0;
    const SentmanCoeffs a = sentman_coeffs(c, env);
    const SentmanCoeffs b = sentman_coeffs(-c, env);
    REQUIRE(std::abs(a.h1 + b.h1) < 1e-14);
    REQUIRE(std::abs(a.h2 - b.h2) < 1e-14);
  }
}

TEST_CASE("plate coefficients agree with the reference error function") {
  const AeroEnv env;
  for (int i = 0; i <= 1000; ++i) {
    const double c = -1.0 + 2.0 * i / 1000.0;
    const SentmanCoeffs got = sentman_coeffs(c, env);
    const SentmanCoeffs want = oracle_coeffs(c, env);
    REQUIRE(std::abs(got.h1 - want.h1) < 1e-10);
    REQUIRE(std::abs(got.h2 - want.h2) < 1e-10);
  }
}

TEST_CASE("polynomial surrogates reproduce the frozen fit coefficients") {
  const AeroEnv env;
  const SentmanFit fit = fit_sentman(env);
  REQUIRE(fit.h1.size() == 3);
  REQUIRE(fit.h2.size() == 5);

  // odd curve: even coefficients vanish up to roundoff
  REQUIRE(std::abs(fit.h1[0]) < 1e-12);
  REQUIRE(std::abs(fit.h1[2]) < 1e-12);
  REQUIRE(fit.h1[1] == Catch::Approx(-0.455719074).margin(1e-8));

  // even curve: odd coefficients vanish up to roundoff
  REQUIRE(std::abs(fit.h2[1]) < 1e-12);
  REQUIRE(std::abs(fit.h2[3]) < 1e-12);
  REQUIRE(fit.h2[0] == Catch::Approx(0.262810843).margin(1e-8));
  REQUIRE(fit.h2[2] == Catch::Approx(3.14574316).margin(1e-7));
  REQUIRE(fit.h2[4] == Catch::Approx(-1.51514227).margin(1e-7));

  double err1 = 0.0, err2 = 0.0;
  for (int i = 0; i <= 2000; ++i) {
    const double c = -1.0 + 2.0 * i / 2000.0;
    const SentmanCoeffs sc = sentman_coeffs(c, env);
    err1 = std::max(err1, std::abs(eval_fit(fit.h1, c) - sc.h1));
    err2 = std::max(err2, std::abs(eval_fit(fit.h2, c) - sc.h2));
  }
  REQUIRE(err1 < 0.05);
  REQUIRE(err2 < 0.15);
}

TEST_CASE("four-plate torque has no roll component and the expected structure") {
  const AeroEnv env;
  const PanelGeometry geom;
  const SentmanFit fit = fit_sentman(env);
  const PolyVec tau = aero_torque_poly(fit, geom, env);
  REQUIRE(tau.size() == 3);

  REQUIRE(chop(tau[0], 1e-15).is_zero());

  // pitch torque collapses to x_cp * w3 * (lift and drag in even powers)
  const double pressure = 0.5 * env.density * env.speed * env.speed * geom.area;
  const double lead = 2.0 * pressure * geom.x_cp;
  REQUIRE(tau[1].coeff(exps({0, 0, 1})) ==
          Catch::Approx(lead * (2.0 * fit.h2[0] - fit.h1[1])).epsilon(1e-10));
  REQUIRE(tau[1].coeff(exps({0, 2, 1})) == Catch::Approx(lead * fit.h2[2]).epsilon(1e-10));
  REQUIRE(tau[1].coeff(exps({0, 0, 3})) == Catch::Approx(lead * fit.h2[2]).epsilon(1e-10));
  REQUIRE(tau[1].coeff(exps({0, 4, 1})) == Catch::Approx(lead * fit.h2[4]).epsilon(1e-10));
  REQUIRE(tau[1].coeff(exps({0, 0, 5})) == Catch::Approx(lead * fit.h2[4]).epsilon(1e-10));

  // yaw torque mirrors pitch with the opposite sign
  REQUIRE(tau[2].coeff(exps({0, 1, 0})) ==
          Catch::Approx(-tau[1].coeff(exps({0, 0, 1}))).epsilon(1e-12));
  REQUIRE(tau[2].coeff(exps({0, 3, 0})) ==
          Catch::Approx(-tau[1].coeff(exps({0, 0, 3}))).epsilon(1e-12));

  // no net torque aligned with or against the stream
  Eigen::VectorXd head = Eigen::VectorXd::Zero(3);
  head[0] = 1.0;
  for (const Polynomial& t : tau) {
    REQUIRE(std::abs(t.evaluate(head)) < 1e-18);
    REQUIRE(std::abs(t.evaluate(-head)) < 1e-18);
  }
}

TEST_CASE("aero example matches its hand-derived coefficients") {
  const PolySystem sys = build_aero_example();
  REQUIRE(sys.nvars() == 6);
  REQUIRE_NOTHROW(validate_system(sys));
  REQUIRE(sys.sphere_dim == 3);

  int deg = 0;
  for (const Polynomial& fi : sys.f) deg = std::max(deg, fi.degree());
  REQUIRE(deg == 5);

  // attitude kinematics carry the rate scaling
  REQUIRE(sys.f[0].terms().size() == 2);
  REQUIRE(sys.f[0].coeff(exps({0, 1, 0, 0, 0, 1})) == Catch::Approx(0.05).margin(1e-15));
  REQUIRE(sys.f[0].coeff(exps({0, 0, 1, 0, 1, 0})) == Catch::Approx(-0.05).margin(1e-15));
  REQUIRE(sys.f[1].coeff(exps({0, 0, 0, 0, 0, 1})) == Catch::Approx(-0.05).margin(1e-15));

  // roll axis sees pure damping
  REQUIRE(sys.f[3].terms().size() == 1);
  REQUIRE(sys.f[3].coeff(exps({0, 0, 0, 1, 0, 0})) == Catch::Approx(-0.016).margin(1e-15));

  // pitch axis: gyroscopic coupling, damping, and the five aero terms
  const Polynomial& f5 = sys.f[4];
  REQUIRE(f5.terms().size() == 7);
  REQUIRE(f5.coeff(exps({0, 0, 0, 1, 0, 1})) ==
          Catch::Approx(0.013265306122448979).margin(1e-12));
  REQUIRE(f5.coeff(exps({0, 0, 0, 0, 1, 0})) == Catch::Approx(-0.016).margin(1e-15));
  REQUIRE(f5.coeff(exps({0, 0, 1, 0, 0, 0})) == Catch::Approx(-0.00251716).margin(1e-7));
  REQUIRE(f5.coeff(exps({0, 2, 1, 0, 0, 0})) == Catch::Approx(-0.00806889).margin(1e-7));
  REQUIRE(f5.coeff(exps({0, 0, 3, 0, 0, 0})) == Catch::Approx(-0.00806889).margin(1e-7));
  REQUIRE(f5.coeff(exps({0, 4, 1, 0, 0, 0})) == Catch::Approx(0.00388637).margin(1e-7));
  REQUIRE(f5.coeff(exps({0, 0, 5, 0, 0, 0})) == Catch::Approx(0.00388637).margin(1e-7));

  // yaw axis mirrors pitch
  const Polynomial& f6 = sys.f[5];
  REQUIRE(f6.coeff(exps({0, 1, 0, 0, 0, 0})) ==
          Catch::Approx(-f5.coeff(exps({0, 0, 1, 0, 0, 0}))).epsilon(1e-12));

  REQUIRE(sys.h.degree() == 2);
  REQUIRE(sys.h.evaluate(sys.equilibria[1]) == 0.0);
}

TEST_CASE("quaternion example matches its hand-derived coefficients") {
  const PolySystem sys = build_quaternion_example();
  REQUIRE(sys.nvars() == 7);
  REQUIRE_NOTHROW(validate_system(sys));
  REQUIRE(sys.sphere_dim == 4);

  int deg = 0;
  for (const Polynomial& fi : sys.f) deg = std::max(deg, fi.degree());
  REQUIRE(deg == 4);

  REQUIRE(sys.f[0].coeff(exps({0, 1, 0, 0, 1, 0, 0})) ==
          Catch::Approx(-1.0 / 30.0).margin(1e-15));
  REQUIRE(sys.f[0].coeff(exps({0, 0, 1, 0, 0, 1, 0})) ==
          Catch::Approx(-1.0 / 30.0).margin(1e-15));

  // proportional and derivative feedback on the roll axis
  REQUIRE(sys.f[4].coeff(exps({0, 1, 0, 0, 0, 0, 0})) ==
          Catch::Approx(-0.096).margin(1e-12));
  REQUIRE(sys.f[4].coeff(exps({0, 0, 0, 0, 1, 0, 0})) ==
          Catch::Approx(-0.08).margin(1e-12));
}

TEST_CASE("circle example is the shifted rotation field") {
  const PolySystem sys = circle_example();
  REQUIRE_NOTHROW(validate_system(sys));
  REQUIRE(sys.f[0].terms().size() == 1);
  REQUIRE(sys.f[0].coeff(exps({0, 2})) == 1.0);
  REQUIRE(sys.f[1].coeff(exps({0, 1})) == -1.0);
  REQUIRE(sys.f[1].coeff(exps({1, 1})) == -1.0);
}

TEST_CASE("jacobian matches finite differences") {
  const PolySystem sys = build_aero_example();
  Eigen::VectorXd x(6);
  x << 0.13, -0.22, 0.31, 0.45, -0.12, 0.27;
  const Eigen::MatrixXd j = system_jacobian(sys, x);
  const double h = 1e-6;
  for (int c = 0; c < 6; ++c) {
    Eigen::VectorXd xp = x, xm = x;
    xp[c] += h;
    xm[c] -= h;
    for (int r = 0; r < 6; ++r) {
      const double fd = (sys.f[r].evaluate(xp) - sys.f[r].evaluate(xm)) / (2.0 * h);
      REQUIRE(j(r, c) == Catch::Approx(fd).margin(1e-6 * (1.0 + std::abs(j(r, c)))));
    }
  }
}

TEST_CASE("tangent linearization separates the two equilibria") {
  const PolySystem circle = circle_example();
  REQUIRE(count_unstable(tangent_jacobian_eigs(circle, circle.equilibria[0])) == 0);
  REQUIRE(count_unstable(tangent_jacobian_eigs(circle, circle.equilibria[1])) == 1);

  const PolySystem aero = build_aero_example();
  const Eigen::VectorXcd stable = tangent_jacobian_eigs(aero, aero.equilibria[0]);
  REQUIRE(stable.size() == 5);
  REQUIRE(count_unstable(stable) == 0);
  REQUIRE(stable.real().maxCoeff() < -1e-3);
  const Eigen::VectorXcd saddle = tangent_jacobian_eigs(aero, aero.equilibria[1]);
  REQUIRE(count_unstable(saddle) == 2);
  REQUIRE(saddle.real().maxCoeff() > 1e-3);

  const PolySystem quat = build_quaternion_example();
  const Eigen::VectorXcd qstable = tangent_jacobian_eigs(quat, quat.equilibria[0]);
  REQUIRE(qstable.size() == 6);
  REQUIRE(count_unstable(qstable) == 0);
  REQUIRE(qstable.real().maxCoeff() < -1e-3);
  const Eigen::VectorXcd qsaddle = tangent_jacobian_eigs(quat, quat.equilibria[1]);
  REQUIRE(count_unstable(qsaddle) == 3);
  REQUIRE(qsaddle.real().maxCoeff() > 1e-3);
}
