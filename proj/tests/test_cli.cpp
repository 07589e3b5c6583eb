#include <catch2/catch_amalgamated.hpp>

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "sosstab/cli.hpp"

using namespace sosstab;

namespace {

namespace fs = std::filesystem;

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "sosstab_cli_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string read_all(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

bool same_bits(double a, double b) {
  return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b);
}

int run(std::vector<std::string> args) { return run_cli(std::move(args)); }

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(item);
  return out;
}

int poly_json_degree(const json& jp) {
  int deg = -1;
  for (const json& rec : jp) {
    int d = 0;
    for (const json& e : rec["exponents"]) d += e.get<int>();
    deg = std::max(deg, d);
  }
  return deg;
}

}  // namespace

TEST_CASE("certify and validate on the circle give exit zero and artifacts") {
  const fs::path dir = fresh_dir("pipeline");
  REQUIRE(run({"certify", "--example", "circle", "--degree-v", "2", "--degree-p", "2", "--out",
               dir.string()}) == kExitOk);

  const json cert = json::parse(read_all(dir / "certificate.json"));
  REQUIRE(cert["status"] == "ok");
  REQUIRE(cert["eps1"].get<double>() == 1e-5);
  REQUIRE(cert["gram"].size() == 2);
  const json solver = json::parse(read_all(dir / "solver.json"));
  REQUIRE(solver["status"] == "optimal");
  REQUIRE(json::parse(read_all(dir / "system.json"))["name"] == "circle");

  REQUIRE(run({"validate", "--example", "circle", "--cert", (dir / "certificate.json").string(),
               "--samples", "2000", "--trajectories", "3", "--t-end", "5", "--out",
               dir.string()}) == kExitOk);
  const json val = json::parse(read_all(dir / "validation.json"));
  REQUIRE(val["passed"] == true);
  REQUIRE(val["report"]["positivity_ok"] == true);
  REQUIRE(val["assumption1"].size() == 1);
  REQUIRE(val["assumption1"][0]["positive_real"].get<int>() >= 1);
  REQUIRE(val["trajectories"].size() == 3);
  REQUIRE(fs::exists(dir / "traj_000.csv"));
  REQUIRE(fs::exists(dir / "traj_002.csv"));
}

TEST_CASE("identical runs write byte identical artifacts") {
  const fs::path d1 = fresh_dir("det1");
  const fs::path d2 = fresh_dir("det2");
  const std::vector<std::string> base = {"certify", "--example", "circle", "--degree-v", "2",
                                         "--degree-p", "2"};
  auto with_out = [&](const fs::path& d) {
    std::vector<std::string> args = base;
    args.push_back("--out");
    args.push_back(d.string());
    return args;
  };
  REQUIRE(run(with_out(d1)) == kExitOk);
  REQUIRE(run(with_out(d2)) == kExitOk);
  REQUIRE(read_all(d1 / "certificate.json") == read_all(d2 / "certificate.json"));
  REQUIRE(read_all(d1 / "system.json") == read_all(d2 / "system.json"));

  for (const fs::path& d : {d1, d2})
    REQUIRE(run({"simulate", "--example", "circle", "--seed", "7", "--t-end", "2", "--out",
                 d.string()}) == kExitOk);
  REQUIRE(read_all(d1 / "trajectory.csv") == read_all(d2 / "trajectory.csv"));
  REQUIRE(!read_all(d1 / "trajectory.csv").empty());
}

TEST_CASE("tampered certificate fails validation with exit one") {
  const fs::path dir = fresh_dir("tamper");
  REQUIRE(run({"certify", "--example", "circle", "--degree-v", "2", "--degree-p", "2", "--out",
               dir.string()}) == kExitOk);

  json cert = json::parse(read_all(dir / "certificate.json"));
  for (json& rec : cert["V"]) rec["coeff"] = -rec["coeff"].get<double>();
  const fs::path bad = dir / "tampered.json";
  write_json_file(bad.string(), cert);

  REQUIRE(run({"validate", "--example", "circle", "--cert", bad.string(), "--samples", "500",
               "--trajectories", "1", "--t-end", "1", "--out",
               (dir / "val").string()}) == kExitValidationFail);
  const json val = json::parse(read_all(dir / "val" / "validation.json"));
  REQUIRE(val["passed"] == false);
  REQUIRE(val["report"]["positivity_ok"] == false);
}

TEST_CASE("input errors exit with code four") {
  const fs::path dir = fresh_dir("errors");
  REQUIRE(run({"certify", "--example", "circle", "--degree-v", "2", "--degree-p", "2", "--out",
               dir.string()}) == kExitOk);

  SECTION("certificate dimension mismatch") {
    REQUIRE(run({"validate", "--example", "aero", "--cert",
                 (dir / "certificate.json").string(), "--out", dir.string()}) ==
            kExitInputError);
  }
  SECTION("unknown example name") {
    REQUIRE(run({"certify", "--example", "torus"}) == kExitInputError);
  }
  SECTION("unknown flag") {
    REQUIRE(run({"certify", "--examplee", "circle"}) == kExitInputError);
  }
  SECTION("missing required certificate path") {
    REQUIRE(run({"validate", "--example", "circle"}) == kExitInputError);
  }
  SECTION("missing config file") {
    REQUIRE(run({"certify", "--config", (dir / "nope.json").string()}) == kExitInputError);
  }
  SECTION("malformed x0") {
    REQUIRE(run({"simulate", "--example", "circle", "--x0", "0,zero"}) == kExitInputError);
    REQUIRE(run({"simulate", "--example", "circle", "--x0", "0,0,0"}) == kExitInputError);
  }
  SECTION("off-manifold x0") {
    REQUIRE(run({"simulate", "--example", "circle", "--x0", "1,1"}) == kExitInputError);
  }
  SECTION("help exits zero") {
    REQUIRE(run({"--help"}) == kExitOk);
  }
}

TEST_CASE("origin start stays at the origin and rate columns carry unit conversions") {
  const fs::path dir = fresh_dir("simulate");
  REQUIRE(run({"simulate", "--example", "aero", "--x0", "0,0,0,0.3,-0.2,0.1", "--dt", "0.01",
               "--t-end", "0.05", "--out", dir.string()}) == kExitOk);

  std::istringstream csv(read_all(dir / "trajectory.csv"));
  std::string header;
  std::getline(csv, header);
  REQUIRE(header == "t,x1,x2,x3,x4,x5,x6,x4_degs,x5_degs,x6_degs");

  std::string first;
  std::getline(csv, first);
  const std::vector<std::string> cells = split_csv_line(first);
  REQUIRE(cells.size() == 10);
  const double rad_to_deg = 180.0 / std::numbers::pi;
  REQUIRE(same_bits(std::stod(cells[7]), 0.3 / 20.0 * rad_to_deg));
  REQUIRE(same_bits(std::stod(cells[8]), -0.2 / 20.0 * rad_to_deg));

  const fs::path dir0 = fresh_dir("simulate0");
  REQUIRE(run({"simulate", "--example", "circle", "--x0", "0,0", "--t-end", "1", "--out",
               dir0.string()}) == kExitOk);
  std::istringstream csv0(read_all(dir0 / "trajectory.csv"));
  std::getline(csv0, header);
  REQUIRE(header == "t,x1,x2");
  std::string line;
  while (std::getline(csv0, line)) {
    const std::vector<std::string> c = split_csv_line(line);
    REQUIRE(std::stod(c[1]) == 0.0);
    REQUIRE(std::stod(c[2]) == 0.0);
  }
}

TEST_CASE("fit-aero writes parity clean coefficients and the requested grid") {
  const fs::path dir = fresh_dir("fit");
  REQUIRE(run({"fit-aero", "--grid", "101", "--out", dir.string()}) == kExitOk);

  const json fit = json::parse(read_all(dir / "aero_fit.json"));
  REQUIRE(fit["grid"] == 101);
  REQUIRE(fit["h1"].size() == 3);
  REQUIRE(fit["h2"].size() == 5);
  REQUIRE(std::abs(fit["h1"][0].get<double>()) <= 1e-12);
  REQUIRE(std::abs(fit["h1"][2].get<double>()) <= 1e-12);
  REQUIRE(std::abs(fit["h2"][1].get<double>()) <= 1e-12);
  REQUIRE(std::abs(fit["h2"][3].get<double>()) <= 1e-12);
  REQUIRE(fit["rms"]["h2"].get<double>() < 0.1);

  std::istringstream csv(read_all(dir / "aero_fit_curves.csv"));
  std::string line;
  std::getline(csv, line);
  REQUIRE(line == "c,h1,h1_fit,h2,h2_fit");
  int rows = 0;
  while (std::getline(csv, line)) ++rows;
  REQUIRE(rows == 101);

  const fs::path dir2 = fresh_dir("fit2");
  REQUIRE(run({"fit-aero", "--grid", "101", "--speed-ratio", "1.0", "--out",
               dir2.string()}) == kExitOk);
  const json fit2 = json::parse(read_all(dir2 / "aero_fit.json"));
  REQUIRE(fit2["h2"][0].get<double>() != fit["h2"][0].get<double>());
}

TEST_CASE("config file sets values and flags override them") {
  const fs::path dir = fresh_dir("config");
  const fs::path cfg_path = dir / "run.json";
  json cfg;
  cfg["example"] = "circle";
  cfg["degree_v"] = 4;
  cfg["degree_p"] = 2;
  cfg["eps"] = 2e-5;
  cfg["out"] = dir.string();
  write_json_file(cfg_path.string(), cfg);

  REQUIRE(run({"certify", "--config", cfg_path.string()}) == kExitOk);
  const json cert = json::parse(read_all(dir / "certificate.json"));
  REQUIRE(poly_json_degree(cert["V"]) == 4);
  REQUIRE(cert["eps1"].get<double>() == 2e-5);
  REQUIRE(cert["eps2"].get<double>() == 2e-5);

  const fs::path dir2 = fresh_dir("config_flags");
  REQUIRE(run({"certify", "--config", cfg_path.string(), "--degree-v", "2", "--eps2", "3e-5",
               "--out", dir2.string()}) == kExitOk);
  const json cert2 = json::parse(read_all(dir2 / "certificate.json"));
  REQUIRE(poly_json_degree(cert2["V"]) == 2);
  REQUIRE(cert2["eps1"].get<double>() == 2e-5);
  REQUIRE(cert2["eps2"].get<double>() == 3e-5);
}
