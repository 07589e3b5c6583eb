#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "sosstab/attitude.hpp"
#include "sosstab/io.hpp"
#include "sosstab/sentman.hpp"
#include "sosstab/sos.hpp"
#include "sosstab/validate.hpp"

namespace sosstab {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidationFail = 1;
inline constexpr int kExitInfeasible = 2;
inline constexpr int kExitFlagged = 3;
inline constexpr int kExitInputError = 4;

struct RunConfig {
  std::string example = "circle";
  int degree_v = 4;
  int degree_p = 6;
  double eps1 = 1e-5;
  double eps2 = 1e-5;
  std::uint64_t seed = 1;
  std::string out_dir = ".";
  bool prune = true;
  int fit_grid = 401;
  int samples = 10000;
  double rate_box = 1.0;
  int trajectories = 10;
  double dt = 0.01;
  double t_end = 10.0;
  AeroExampleParams aero;
  QuatExampleParams quat;
};

inline PolySystem make_system(const RunConfig& cfg) {
  if (cfg.example == "circle") return circle_example();
  if (cfg.example == "aero") return build_aero_example(cfg.aero);
  if (cfg.example == "quat") return build_quaternion_example(cfg.quat);
  throw std::invalid_argument("make_system: unknown example '" + cfg.example + "'");
}

namespace cli_detail {

template <typename T>
void load_key(const json& j, const char* key, T* dst) {
  if (j.contains(key)) *dst = j.at(key).get<T>();
}

inline void load_vec3(const json& j, const char* key, Eigen::Vector3d* dst) {
  if (!j.contains(key)) return;
  const auto v = j.at(key).get<std::vector<double>>();
  if (v.size() != 3) throw std::invalid_argument(std::string(key) + " must have 3 entries");
  *dst = Eigen::Vector3d(v[0], v[1], v[2]);
}

inline void load_env(const json& j, AeroEnv* env) {
  load_key(j, "density", &env->density);
  load_key(j, "speed", &env->speed);
  load_key(j, "speed_ratio", &env->speed_ratio);
  load_key(j, "accommodation", &env->accommodation);
  load_key(j, "wall_temp", &env->wall_temp);
  load_key(j, "particle_mass", &env->particle_mass);
  load_key(j, "boltzmann", &env->boltzmann);
}

inline std::vector<double> parse_csv_doubles(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t pos = 0;
    double v = 0;
    try {
      v = std::stod(item, &pos);
    } catch (const std::exception&) {
      throw std::invalid_argument("expected a comma-separated list of numbers, got '" + text +
                                  "'");
    }
    while (pos < item.size() && std::isspace(static_cast<unsigned char>(item[pos]))) ++pos;
    if (pos != item.size())
      throw std::invalid_argument("expected a comma-separated list of numbers, got '" + text +
                                  "'");
    out.push_back(v);
  }
  return out;
}

inline std::string traj_filename(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "traj_%03d.csv", index);
  return buf;
}

}  // namespace cli_detail

// Keys mirror the flag names; unknown keys are ignored so configs can carry
// their own annotations.
inline void apply_config(const json& j, RunConfig* cfg) {
  using cli_detail::load_env;
  using cli_detail::load_key;
  using cli_detail::load_vec3;
  if (!j.is_object()) throw std::invalid_argument("apply_config: config must be a JSON object");
  load_key(j, "example", &cfg->example);
  load_key(j, "degree_v", &cfg->degree_v);
  load_key(j, "degree_p", &cfg->degree_p);
  if (j.contains("eps")) {
    cfg->eps1 = j.at("eps").get<double>();
    cfg->eps2 = cfg->eps1;
  }
  load_key(j, "eps1", &cfg->eps1);
  load_key(j, "eps2", &cfg->eps2);
  load_key(j, "seed", &cfg->seed);
  load_key(j, "out", &cfg->out_dir);
  load_key(j, "prune", &cfg->prune);
  load_key(j, "fit_grid", &cfg->fit_grid);
  load_key(j, "samples", &cfg->samples);
  load_key(j, "rate_box", &cfg->rate_box);
  load_key(j, "trajectories", &cfg->trajectories);
  load_key(j, "dt", &cfg->dt);
  load_key(j, "t_end", &cfg->t_end);
  if (j.contains("aero")) {
    const json& ja = j.at("aero");
    load_key(ja, "damping_gain", &cfg->aero.damping_gain);
    load_key(ja, "rate_scale", &cfg->aero.rate_scale);
    load_vec3(ja, "inertia", &cfg->aero.inertia);
    if (ja.contains("env")) load_env(ja.at("env"), &cfg->aero.env);
    if (ja.contains("geometry")) {
      const json& jg = ja.at("geometry");
      load_key(jg, "area", &cfg->aero.geometry.area);
      load_key(jg, "x_cp", &cfg->aero.geometry.x_cp);
      load_key(jg, "r_perp", &cfg->aero.geometry.r_perp);
    }
  }
  if (j.contains("quat")) {
    const json& jq = j.at("quat");
    load_key(jq, "kp", &cfg->quat.kp);
    load_key(jq, "kd", &cfg->quat.kd);
    load_key(jq, "orbit_rate", &cfg->quat.orbit_rate);
    load_key(jq, "rate_scale", &cfg->quat.rate_scale);
    load_vec3(jq, "inertia", &cfg->quat.inertia);
  }
}

inline int cmd_fit_aero(const RunConfig& cfg) {
  const AeroEnv& env = cfg.aero.env;
  const SentmanFit fit = fit_sentman(env, 2, 4, cfg.fit_grid);

  const int n = cfg.fit_grid;
  double ss1 = 0, ss2 = 0;
  std::ostringstream csv;
  csv << "c,h1,h1_fit,h2,h2_fit\n";
  for (int i = 0; i < n; ++i) {
    const double c = -1.0 + 2.0 * i / (n - 1);
    const SentmanCoeffs sc = sentman_coeffs(c, env);
    const double f1 = eval_fit(fit.h1, c);
    const double f2 = eval_fit(fit.h2, c);
    ss1 += (sc.h1 - f1) * (sc.h1 - f1);
    ss2 += (sc.h2 - f2) * (sc.h2 - f2);
    csv << format_g17(c) << ',' << format_g17(sc.h1) << ',' << format_g17(f1) << ','
        << format_g17(sc.h2) << ',' << format_g17(f2) << '\n';
  }

  json j;
  j["h1"] = vector_to_json(fit.h1);
  j["h2"] = vector_to_json(fit.h2);
  j["rms"] = {{"h1", std::sqrt(ss1 / n)}, {"h2", std::sqrt(ss2 / n)}};
  j["grid"] = n;

  const std::filesystem::path out(cfg.out_dir);
  std::filesystem::create_directories(out);
  write_json_file((out / "aero_fit.json").string(), j);
  write_text_file((out / "aero_fit_curves.csv").string(), csv.str());
  std::printf("fit-aero: grid=%d rms_h1=%.3e rms_h2=%.3e\n", n, std::sqrt(ss1 / n),
              std::sqrt(ss2 / n));
  return kExitOk;
}

inline int cmd_certify(const RunConfig& cfg) {
  const PolySystem sys = make_system(cfg);
  SosProgramSpec spec;
  spec.system = sys;
  spec.deg_v = cfg.degree_v;
  spec.deg_p = cfg.degree_p;
  spec.eps1 = cfg.eps1;
  spec.eps2 = cfg.eps2;
  spec.prune = cfg.prune;

  const CertifyResult res = certify_agas(spec);

  const std::filesystem::path out(cfg.out_dir);
  std::filesystem::create_directories(out);
  write_json_file((out / "system.json").string(), system_to_json(sys));
  json summary;
  summary["status"] = to_string(res.sdp.status);
  summary["message"] = res.sdp.message;
  summary["iterations"] = res.sdp.iterations;
  summary["primal_obj"] = res.sdp.primal_obj;
  summary["dual_obj"] = res.sdp.dual_obj;
  summary["residuals"] = {{"primal", res.sdp.residuals.primal},
                          {"dual", res.sdp.residuals.dual},
                          {"gap", res.sdp.residuals.gap}};
  write_json_file((out / "solver.json").string(), summary);

  std::printf("certify: example=%s status=%s iterations=%d\n", cfg.example.c_str(),
              to_string(res.sdp.status), res.sdp.iterations);
  if (res.sdp.status == SdpStatus::Infeasible) {
    std::fprintf(stderr, "certify: program infeasible (%s)\n", res.sdp.message.c_str());
    return kExitInfeasible;
  }
  if (!res.certificate.has_value()) {
    std::fprintf(stderr, "certify: no certificate extracted (%s)\n", res.sdp.message.c_str());
    return kExitValidationFail;
  }

  const LyapunovCertificate& cert = *res.certificate;
  write_json_file((out / "certificate.json").string(), certificate_to_json(cert));
  std::printf("certify: residuals pos=%.3e dec=%.3e min_eig pos=%.3e dec=%.3e -> %s\n",
              cert.residual_pos, cert.residual_dec, cert.min_eig_pos, cert.min_eig_dec,
              to_string(cert.status));
  switch (cert.status) {
    case CertStatus::Ok: return kExitOk;
    case CertStatus::Flagged: return kExitFlagged;
    default: return kExitValidationFail;
  }
}

inline int cmd_validate(const RunConfig& cfg, const std::string& cert_path) {
  const PolySystem sys = make_system(cfg);
  const LyapunovCertificate cert =
      certificate_from_json(read_json_file(cert_path), equilibrium_product(sys));

  ValidationOptions vopt;
  vopt.samples = cfg.samples;
  vopt.ambient_samples = cfg.samples;
  vopt.rate_box = cfg.rate_box;
  vopt.seed = cfg.seed;
  const ValidationReport rep = check_conditions(sys, cert, vopt);

  json ja = json::array();
  bool assumption_ok = true;
  for (std::size_t i = 1; i < sys.equilibria.size(); ++i) {
    const Eigen::VectorXcd eigs = tangent_jacobian_eigs(sys, sys.equilibria[i]);
    const int unstable = count_unstable(eigs);
    json je = json::array();
    for (Eigen::Index k = 0; k < eigs.size(); ++k)
      je.push_back(json::array({eigs[k].real(), eigs[k].imag()}));
    ja.push_back({{"equilibrium", i},
                  {"eigenvalues", je},
                  {"positive_real", unstable},
                  {"ok", unstable >= 1}});
    assumption_ok = assumption_ok && unstable >= 1;
  }

  const std::filesystem::path out(cfg.out_dir);
  std::filesystem::create_directories(out);

  SimOptions sopt;
  sopt.dt = cfg.dt;
  sopt.t_end = cfg.t_end;
  const std::vector<Eigen::VectorXd> starts =
      sample_manifold(sys, cfg.trajectories, cfg.rate_box, cfg.seed);
  json jt = json::array();
  bool monotone_ok = true;
  for (int k = 0; k < cfg.trajectories; ++k) {
    const Trajectory traj = simulate(sys, starts[k], sopt);
    const std::vector<double> v = values_along(cert.v, traj);
    int violations = 0;
    for (std::size_t s = 1; s < v.size(); ++s)
      if (v[s] > v[s - 1] + 1e-9) ++violations;
    monotone_ok = monotone_ok && violations == 0;

    const std::string name = cli_detail::traj_filename(k);
    std::ostringstream csv;
    write_trajectory_csv(csv, traj, {{"V", v}});
    write_text_file((out / name).string(), csv.str());
    jt.push_back({{"x0", vector_to_json(starts[k])},
                  {"violations", violations},
                  {"final_norm", traj.x.back().norm()},
                  {"max_constraint_drift", traj.max_constraint_drift},
                  {"csv", name}});
  }

  const bool passed = rep.passed && assumption_ok && monotone_ok;
  json j;
  j["report"] = report_to_json(rep);
  j["assumption1"] = std::move(ja);
  j["trajectories"] = std::move(jt);
  j["passed"] = passed;
  write_json_file((out / "validation.json").string(), j);

  std::printf(
      "validate: example=%s samples=%d conditions=%s assumption1=%s trajectories=%s\n",
      cfg.example.c_str(), cfg.samples, rep.passed ? "pass" : "fail",
      assumption_ok ? "pass" : "fail", monotone_ok ? "pass" : "fail");
  return passed ? kExitOk : kExitValidationFail;
}

inline int cmd_simulate(const RunConfig& cfg, const std::string& cert_path,
                        const std::string& x0_csv) {
  const PolySystem sys = make_system(cfg);
  const int n = sys.nvars();

  Eigen::VectorXd x0;
  if (x0_csv.empty()) {
    x0 = sample_manifold(sys, 1, cfg.rate_box, cfg.seed)[0];
  } else {
    const std::vector<double> vals = cli_detail::parse_csv_doubles(x0_csv);
    if (static_cast<int>(vals.size()) != n)
      throw std::invalid_argument("simulate: x0 needs " + std::to_string(n) + " entries, got " +
                                  std::to_string(vals.size()));
    x0 = Eigen::Map<const Eigen::VectorXd>(vals.data(), n);
  }
  if (std::abs(sys.h.evaluate(x0)) > 1e-9)
    throw std::invalid_argument("simulate: x0 is off the constraint manifold");

  SimOptions sopt;
  sopt.dt = cfg.dt;
  sopt.t_end = cfg.t_end;
  const Trajectory traj = simulate(sys, x0, sopt);

  std::vector<CsvColumn> extra;
  if (!cert_path.empty()) {
    const LyapunovCertificate cert =
        certificate_from_json(read_json_file(cert_path), equilibrium_product(sys));
    extra.push_back({"V", values_along(cert.v, traj)});
  }
  const double rad_to_deg = 180.0 / std::numbers::pi;
  for (int k = sys.sphere_dim; k < n; ++k) {
    CsvColumn col;
    col.name = "x" + std::to_string(k + 1) + "_degs";
    col.values.reserve(traj.x.size());
    for (const Eigen::VectorXd& x : traj.x)
      col.values.push_back(x[k] / sys.scale[k] * rad_to_deg);
    extra.push_back(std::move(col));
  }

  const std::filesystem::path out(cfg.out_dir);
  std::filesystem::create_directories(out);
  std::ostringstream csv;
  write_trajectory_csv(csv, traj, extra);
  write_text_file((out / "trajectory.csv").string(), csv.str());
  std::printf("simulate: example=%s steps=%zu final_norm=%.6e drift=%.3e\n", cfg.example.c_str(),
              traj.t.size() - 1, traj.x.back().norm(), traj.max_constraint_drift);
  return kExitOk;
}

// Precedence: built-in defaults, then the config file, then flags.
inline int run_cli(std::vector<std::string> args) {
  RunConfig cfg;
  std::string config_path, cert_path, x0_csv;

  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) config_path = args[i + 1];
    else if (args[i].rfind("--config=", 0) == 0) config_path = args[i].substr(9);
  }
  if (!config_path.empty()) {
    try {
      apply_config(read_json_file(config_path), &cfg);
    } catch (const std::exception& e) {
      std::fprintf(stderr, "error: %s\n", e.what());
      return kExitInputError;
    }
  }

  CLI::App app{"builds, checks, and exercises stability certificates for polynomial attitude "
               "dynamics on unit-constraint manifolds"};
  app.name("sosstab");
  app.require_subcommand(1);

  struct EpsRefs {
    CLI::Option* all = nullptr;
    CLI::Option* e1 = nullptr;
    CLI::Option* e2 = nullptr;
  };
  double eps_all = 0, eps1_v = 0, eps2_v = 0;
  std::map<const CLI::App*, EpsRefs> eps_refs;

  auto add_shared = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON config file; flags override its values");
    sub->add_option("--example", cfg.example, "system to use: circle, aero, or quat")
        ->check(CLI::IsMember({"circle", "aero", "quat"}));
    sub->add_option("--degree-v", cfg.degree_v, "degree of the certificate polynomial");
    sub->add_option("--degree-p", cfg.degree_p, "degree of the manifold multiplier");
    EpsRefs refs;
    refs.all = sub->add_option("--eps", eps_all, "sets both margin parameters");
    refs.e1 = sub->add_option("--eps1", eps1_v, "positivity margin");
    refs.e2 = sub->add_option("--eps2", eps2_v, "decrease margin");
    eps_refs[sub] = refs;
    sub->add_option("--seed", cfg.seed, "RNG seed for sampling");
    sub->add_option("--out", cfg.out_dir, "output directory");
    sub->add_flag("--prune,!--no-prune", cfg.prune, "monomial basis reduction (default on)");
  };

  CLI::App* fit = app.add_subcommand("fit-aero", "fit the plate force coefficients and write "
                                                 "the curves");
  add_shared(fit);
  fit->add_option("--grid", cfg.fit_grid, "fit grid size")->check(CLI::PositiveNumber);
  fit->add_option("--density", cfg.aero.env.density, "freestream density, kg/m^3");
  fit->add_option("--speed", cfg.aero.env.speed, "relative wind speed, m/s");
  fit->add_option("--speed-ratio", cfg.aero.env.speed_ratio, "thermal speed ratio");
  fit->add_option("--accommodation", cfg.aero.env.accommodation, "energy accommodation");
  fit->add_option("--wall-temp", cfg.aero.env.wall_temp, "wall temperature, K");
  fit->add_option("--particle-mass", cfg.aero.env.particle_mass, "mean particle mass, kg");

  CLI::App* certify = app.add_subcommand("certify", "build and solve the certificate program");
  add_shared(certify);
  certify->add_option("--damping-gain", cfg.aero.damping_gain, "rate damping gain (aero)");
  certify->add_option("--kp", cfg.quat.kp, "proportional gain (quat)");
  certify->add_option("--kd", cfg.quat.kd, "derivative gain (quat)");
  certify->add_option("--orbit-rate", cfg.quat.orbit_rate, "orbital rate, rad/s (quat)");
  certify->add_option("--density", cfg.aero.env.density, "freestream density, kg/m^3");
  certify->add_option("--speed", cfg.aero.env.speed, "relative wind speed, m/s");
  certify->add_option("--speed-ratio", cfg.aero.env.speed_ratio, "thermal speed ratio");
  certify->add_option("--accommodation", cfg.aero.env.accommodation, "energy accommodation");

  CLI::App* validate = app.add_subcommand("validate", "check a certificate against the system");
  add_shared(validate);
  validate->add_option("--cert", cert_path, "certificate JSON to check")->required();
  validate->add_option("--samples", cfg.samples, "manifold and ambient sample count");
  validate->add_option("--rate-box", cfg.rate_box, "rate sampling half width");
  validate->add_option("--trajectories", cfg.trajectories, "simulated trajectory count");
  validate->add_option("--dt", cfg.dt, "integration step, s");
  validate->add_option("--t-end", cfg.t_end, "integration horizon, s");

  CLI::App* simulate = app.add_subcommand("simulate", "integrate the system and write the "
                                                      "trajectory");
  add_shared(simulate);
  simulate->add_option("--cert", cert_path, "certificate JSON for the V column");
  simulate->add_option("--x0", x0_csv, "initial state as comma-separated values");
  simulate->add_option("--rate-box", cfg.rate_box, "rate sampling half width");
  simulate->add_option("--dt", cfg.dt, "integration step, s");
  simulate->add_option("--t-end", cfg.t_end, "integration horizon, s");

  try {
    std::reverse(args.begin(), args.end());
    app.parse(std::move(args));
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInputError;
  }

  const CLI::App* active = app.get_subcommands().front();
  const EpsRefs& refs = eps_refs.at(active);
  if (refs.all->count() > 0) {
    cfg.eps1 = eps_all;
    cfg.eps2 = eps_all;
  }
  if (refs.e1->count() > 0) cfg.eps1 = eps1_v;
  if (refs.e2->count() > 0) cfg.eps2 = eps2_v;

  try {
    if (active == fit) return cmd_fit_aero(cfg);
    if (active == certify) return cmd_certify(cfg);
    if (active == validate) return cmd_validate(cfg, cert_path);
    return cmd_simulate(cfg, cert_path, x0_csv);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitInputError;
  }
}

}  // namespace sosstab
