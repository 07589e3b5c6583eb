#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>

#include <bit>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>

#include "sosstab/attitude.hpp"
#include "sosstab/io.hpp"
#include "sosstab/sos.hpp"
#include "sosstab/validate.hpp"

using namespace sosstab;

namespace {

bool same_bits(double a, double b) {
  return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b);
}

bool same_terms(const Polynomial& a, const Polynomial& b) {
  if (a.nvars() != b.nvars() || a.terms().size() != b.terms().size()) return false;
  auto ita = a.terms().begin();
  auto itb = b.terms().begin();
  for (; ita != a.terms().end(); ++ita, ++itb)
    if (ita->first != itb->first || !same_bits(ita->second, itb->second)) return false;
  return true;
}

std::string read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::filesystem::path temp_file(const std::string& stem) {
  return std::filesystem::temp_directory_path() / ("sosstab_io_" + stem);
}

SosProgramSpec circle_spec() {
  SosProgramSpec spec;
  spec.system = circle_example();
  spec.deg_v = 2;
  spec.deg_p = 2;
  return spec;
}

}  // namespace

TEST_CASE("polynomial json round trip is bit exact") {
  Polynomial p(3);
  p.add_term({0, 0, 0}, 1.0 / 3.0);
  p.add_term({2, 0, 1}, -2.5e17);
  p.add_term({0, 1, 0}, std::numbers::pi);
  p.add_term({0, 0, 5}, 1e-300);
  p.add_term({1, 1, 1}, 0.1);

  const json j = poly_to_json(p);
  const Polynomial q = poly_from_json(j, 3);
  REQUIRE(same_terms(p, q));

  const json reparsed = json::parse(j.dump());
  REQUIRE(same_terms(p, poly_from_json(reparsed, 3)));
}

TEST_CASE("polynomial json records come out graded lex sorted") {
  Polynomial p(2);
  p.add_term({0, 2}, 3.0);
  p.add_term({1, 0}, 1.0);
  p.add_term({0, 0}, 7.0);
  p.add_term({2, 0}, 2.0);

  const json j = poly_to_json(p);
  REQUIRE(j.size() == 4);
  REQUIRE(j[0]["exponents"] == json::array({0, 0}));
  REQUIRE(j[1]["exponents"] == json::array({1, 0}));
  REQUIRE(j[2]["exponents"] == json::array({0, 2}));
  REQUIRE(j[3]["exponents"] == json::array({2, 0}));
}

TEST_CASE("malformed polynomial json is rejected") {
  REQUIRE_THROWS_AS(poly_from_json(json::object(), 2), std::invalid_argument);
  REQUIRE_THROWS_AS(poly_from_json(json::parse(R"([{"coeff": 1.0}])"), 2),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(poly_from_json(json::parse(R"([{"exponents": [1], "coeff": 1.0}])"), 2),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(poly_from_json(json::parse(R"([{"exponents": [1, -1], "coeff": 1.0}])"), 2),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(poly_from_json(json::parse(R"([{"exponents": [1, 1], "coeff": "x"}])"), 2),
                    std::invalid_argument);
}

TEST_CASE("certificate json round trips and still validates") {
  const SosProgramSpec spec = circle_spec();
  const CertifyResult res = certify_agas(spec);
  REQUIRE(res.certificate.has_value());
  const LyapunovCertificate& cert = *res.certificate;

  const json j = json::parse(certificate_to_json(cert).dump(2));
  const LyapunovCertificate back =
      certificate_from_json(j, equilibrium_product(spec.system));

  REQUIRE(same_terms(cert.v, back.v));
  REQUIRE(same_terms(cert.p, back.p));
  REQUIRE(same_bits(cert.eps1, back.eps1));
  REQUIRE(same_bits(cert.eps2, back.eps2));
  REQUIRE(back.basis_pos == cert.basis_pos);
  REQUIRE(back.basis_dec == cert.basis_dec);
  REQUIRE(back.gram_pos == cert.gram_pos);
  REQUIRE(back.gram_dec == cert.gram_dec);
  REQUIRE(same_bits(cert.residual_dec, back.residual_dec));
  REQUIRE(back.status == cert.status);

  ValidationOptions opt;
  opt.samples = 500;
  opt.ambient_samples = 500;
  const ValidationReport rep = check_conditions(spec.system, back, opt);
  REQUIRE(rep.passed);
}

TEST_CASE("certificate json with missing fields is rejected") {
  const CertifyResult res = certify_agas(circle_spec());
  json j = certificate_to_json(*res.certificate);
  j.erase("gram");
  REQUIRE_THROWS_AS(certificate_from_json(j, equilibrium_product(circle_spec().system)),
                    std::invalid_argument);
}

TEST_CASE("system json round trips") {
  const PolySystem sys = build_aero_example();
  const json j = json::parse(system_to_json(sys).dump());
  const PolySystem back = system_from_json(j);

  REQUIRE(back.name == sys.name);
  REQUIRE(back.sphere_dim == sys.sphere_dim);
  REQUIRE(back.f.size() == sys.f.size());
  for (std::size_t i = 0; i < sys.f.size(); ++i) REQUIRE(same_terms(sys.f[i], back.f[i]));
  REQUIRE(same_terms(sys.h, back.h));
  REQUIRE(back.equilibria.size() == sys.equilibria.size());
  for (std::size_t i = 0; i < sys.equilibria.size(); ++i)
    REQUIRE(back.equilibria[i] == sys.equilibria[i]);
  REQUIRE(back.scale == sys.scale);
  REQUIRE(back.shift == sys.shift);
  REQUIRE_NOTHROW(validate_system(back));
}

TEST_CASE("validation report json mirrors the fields") {
  ValidationReport rep;
  rep.manifold_samples = 42;
  rep.ambient_samples = 17;
  rep.max_h_abs = 3e-16;
  rep.min_v = 0.25;
  rep.min_v_margin = 0.1;
  rep.max_decrease_violation = -1e-9;
  rep.min_gram_eig = 4e-7;
  rep.positivity_ok = true;
  rep.decrease_ok = true;
  rep.gram_ok = true;
  rep.passed = true;

  const json j = report_to_json(rep);
  REQUIRE(j["manifold_samples"] == 42);
  REQUIRE(j["ambient_samples"] == 17);
  REQUIRE(same_bits(j["max_h_abs"].get<double>(), rep.max_h_abs));
  REQUIRE(same_bits(j["min_gram_eig"].get<double>(), rep.min_gram_eig));
  REQUIRE(j["positivity_ok"] == true);
  REQUIRE(j["passed"] == true);
}

TEST_CASE("sdp fixtures round trip and re-solve identically") {
  SdpProblem prob;
  prob.layout = SdpLayout({2}, 0);
  Eigen::MatrixXd a(1, prob.layout.total());
  a << 1.0, 0.0, 0.0;
  prob.a = a.sparseView();
  prob.b = Eigen::VectorXd::Constant(1, 1.0);
  prob.c = Eigen::VectorXd::Zero(3);
  prob.c[0] = 1.0;
  prob.c[2] = 1.0;

  const json j = json::parse(sdp_problem_to_json(prob).dump());
  const SdpProblem back = sdp_problem_from_json(j);
  REQUIRE(Eigen::MatrixXd(back.a) == Eigen::MatrixXd(prob.a));
  REQUIRE(back.b == prob.b);
  REQUIRE(back.c == prob.c);

  const SdpSolution s1 = solve_sdp(prob);
  const SdpSolution s2 = solve_sdp(back);
  REQUIRE(s1.status == SdpStatus::Optimal);
  REQUIRE(s2.status == SdpStatus::Optimal);
  REQUIRE(same_bits(s1.primal_obj, s2.primal_obj));

  const json js = sdp_solution_to_json(s1);
  REQUIRE(js["status"] == "optimal");
  REQUIRE(js["blocks"].size() == 1);
  REQUIRE(same_bits(js["primal_obj"].get<double>(), s1.primal_obj));
}

TEST_CASE("trajectory csv has the pinned header and survives a text round trip") {
  const PolySystem sys = circle_example();
  Eigen::VectorXd x0(2);
  x0 << std::cos(1.0) - 1.0, std::sin(1.0);
  SimOptions opt;
  opt.dt = 0.125;
  opt.t_end = 1.0;
  const Trajectory traj = simulate(sys, x0, opt);

  std::vector<double> v(traj.t.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = traj.x[i].squaredNorm();

  std::ostringstream out;
  write_trajectory_csv(out, traj, {{"V", v}});
  const std::string text = out.str();

  std::istringstream in(text);
  std::string header;
  std::getline(in, header);
  REQUIRE(header == "t,x1,x2,V");

  std::size_t rows = 0;
  std::string line;
  while (std::getline(in, line)) {
    double vals[4];
    const char* s = line.c_str();
    char* end = nullptr;
    for (double& val : vals) {
      val = std::strtod(s, &end);
      REQUIRE(end != s);
      s = (*end == ',') ? end + 1 : end;
    }
    REQUIRE(same_bits(vals[0], traj.t[rows]));
    REQUIRE(same_bits(vals[1], traj.x[rows][0]));
    REQUIRE(same_bits(vals[2], traj.x[rows][1]));
    REQUIRE(same_bits(vals[3], v[rows]));
    ++rows;
  }
  REQUIRE(rows == traj.t.size());

  std::ostringstream again;
  write_trajectory_csv(again, traj, {{"V", v}});
  REQUIRE(again.str() == text);

  REQUIRE_THROWS_AS(write_trajectory_csv(again, traj, {{"V", std::vector<double>(3)}}),
                    std::invalid_argument);
}

TEST_CASE("json files rewrite byte identically") {
  const CertifyResult res = certify_agas(circle_spec());
  const json j = certificate_to_json(*res.certificate);

  const std::filesystem::path p1 = temp_file("cert_a.json");
  const std::filesystem::path p2 = temp_file("cert_b.json");
  write_json_file(p1.string(), j);
  write_json_file(p2.string(), j);
  const std::string t1 = read_all(p1);
  const std::string t2 = read_all(p2);
  std::filesystem::remove(p1);
  std::filesystem::remove(p2);

  REQUIRE(!t1.empty());
  REQUIRE(t1 == t2);
  REQUIRE(t1.back() == '\n');

  const json parsed = json::parse(t1);
  const LyapunovCertificate back =
      certificate_from_json(parsed, equilibrium_product(circle_spec().system));
  REQUIRE(same_terms(res.certificate->v, back.v));
}
