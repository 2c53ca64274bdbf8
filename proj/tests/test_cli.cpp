#include "doctest.h"

#include "l2flow/cli.hpp"
#include "l2flow/io.hpp"
#include "l2flow/presets.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace l2flow;
namespace fs = std::filesystem;

namespace {

ErrorCode code_of(const std::string& text, std::string* what = nullptr) {
  try {
    parse_config(text);
  } catch (const Error& e) {
    if (what) *what = e.what();
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::IoError;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("l2flow_test_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("parse_config") {
  const auto c = parse_config("scenario = round_sphere\nn = 5\nA0 = 2\nengine = ode\n");
  CHECK(c.scenario == "round_sphere");
  CHECK(c.n == 5);
  CHECK(c.A0 == 2.0);
  CHECK(c.engine == Engine::Ode);

  const auto d = parse_config(
      "# dumbbell\nscenario = so3_dumbbell\nN = 48\n[scenario]\nneck_depth = 0.7 ; deep\n[pde]\ndt_safety = 0.05\n"
      "normalized = true\n[ode]\nmode = paper_literal\n");
  CHECK(d.neck_depth == 0.7);
  CHECK(d.flow.dt_safety == 0.05);
  CHECK(d.flow.normalized);
  CHECK(d.rhs_mode == RhsMode::PaperLiteral);
  CHECK(d.N == 48);

  std::string what;
  CHECK(code_of("scenario = round_sphere\nN = 8\n", &what) == ErrorCode::ValidationError);
  CHECK(what.find("line 2") != std::string::npos);
  CHECK(code_of("scenario = round_sphere\nwobble = 3\n", &what) == ErrorCode::ParseError);
  CHECK(what.find("wobble") != std::string::npos);
  CHECK(what.find("line 2") != std::string::npos);
  CHECK(code_of("scenario = round_sphere\n[pde]\nn = 3\n") == ErrorCode::ParseError);
  CHECK(code_of("scenario = round_sphere\nscenario = custom\n") == ErrorCode::ParseError);
  CHECK(code_of("scenario = round_sphere\njust words\n") == ErrorCode::ParseError);
  CHECK(code_of("scenario = round_sphere\n[nowhere]\n") == ErrorCode::ParseError);
  CHECK(code_of("n = 3\n") == ErrorCode::ValidationError);
  CHECK(code_of("scenario = torus\n") == ErrorCode::ValidationError);
  CHECK(code_of("scenario = round_sphere\nA0 = -1\n") == ErrorCode::ValidationError);
  CHECK(code_of("scenario = round_sphere\nA0 = one\n") == ErrorCode::ValidationError);
  CHECK(code_of("scenario = product_s5_s1\nengine = pde\n") == ErrorCode::ValidationError);
  CHECK(code_of("scenario = so3_dumbbell\nengine = ode\n") == ErrorCode::ValidationError);
  CHECK(code_of("scenario = round_sphere\nn = 5\nengine = pde\n") == ErrorCode::ValidationError);
  CHECK(code_of("scenario = custom\n") == ErrorCode::ValidationError);
  CHECK(code_of("scenario = round_sphere\n[pde]\ndt_safety = 0\n") == ErrorCode::ValidationError);
}

TEST_CASE("scenario metrics and states") {
  auto c = parse_config("scenario = product_s2_s1\nA0 = 4\nN = 32\n");
  const auto m = scenario_metric(c);
  CHECK(m.psi()(0) == doctest::Approx(2.0));
  CHECK(arclength(m).L == doctest::Approx(kPi / 2));
  CHECK(volume(m) == doctest::Approx(8.0 * kPi * kPi));
  const auto st = scenario_state(c);
  CHECK(st.factors[1].scale == doctest::Approx(1.0 / 16.0));
  CHECK_THROWS_AS(scenario_state(parse_config("scenario = so3_dumbbell\n")), Error);

  const auto s3 = scenario_metric(parse_config("scenario = round_sphere\nA0 = 4\nN = 64\n"));
  CHECK(volume(s3) == doctest::Approx(2.0 * kPi * kPi * 8.0).epsilon(1e-8));
}

TEST_CASE("diameter bounds") {
  const auto s3 = presets::round_s3(201);
  const auto d = diameter_bounds(s3);
  CHECK(d.lower == doctest::Approx(kPi));
  CHECK(d.lower <= kPi + 1e-12);
  CHECK(d.upper >= kPi);
  // S^2(sqrt A) x circle of length 2 pi / A: the true diameter sqrt(pi^2 A + pi^2 / A^2) lies inside
  for (double a : {4.0, 8.0, 16.0}) {
    const auto t = presets::tube(32, std::sqrt(a), 2.0 * kPi / a);
    const auto b = diameter_bounds(t);
    const double truth = std::hypot(kPi * std::sqrt(a), kPi / a);
    CHECK(b.lower <= truth);
    CHECK(b.upper >= truth);
  }
}

TEST_CASE("run_scenario exit codes") {
  SUBCASE("S^5 x S^1 singular, paper literal") {
    const auto dir = scratch("s5");
    const auto c = parse_config("scenario = product_s5_s1\nA0 = 1\nB0 = 1\nexpect = singular\nmode = paper_literal\n");
    const auto s = run_scenario(c, dir.string());
    CHECK(s.exit_code == kExitOk);
    CHECK(std::abs(s.t_sing / (10.0 / sphere_riem_constant(5)) - 1.0) < 1e-2);
    CHECK(s.t_sing_paper == doctest::Approx(0.25));
    CHECK(fs::exists(dir / "trajectory.csv"));
    const std::string csv = slurp(dir / "trajectory.csv");
    CHECK(csv.find("# curvature_norm=full\n") != std::string::npos);
    CHECK(csv.find("# rhs_mode=paper_literal\n") != std::string::npos);
    CHECK(slurp(dir / "summary.json").find("\"t_sing_paper_literal\"") != std::string::npos);
  }
  SUBCASE("dumbbell long time, short run") {
    const auto dir = scratch("bell");
    const auto c =
        parse_config("scenario = so3_dumbbell\nN = 32\nexpect = long_time\nt_end = 0.01\nspectral_every = 5\nplot = true\n");
    const auto s = run_scenario(c, dir.string());
    CHECK(s.exit_code == kExitOk);
    CHECK(s.violations.empty());
    CHECK(s.termination == "ReachedEnd");
    for (const char* f : {"diagnostics.csv", "snapshot_initial.txt", "snapshot_final.txt", "summary.json", "energy.svg"})
      CHECK(fs::exists(dir / f));
    std::ifstream snap(dir / "snapshot_final.txt");
    CHECK(read_snapshot(snap).size() == 33);
    const std::string csv = slurp(dir / "diagnostics.csv");
    CHECK(csv.find("# curvature_norm=paper\n") != std::string::npos);
    CHECK(csv.find("# rhs_mode=gradient_derived\n") != std::string::npos);
  }
  SUBCASE("round S^5 expected to live long") {
    const auto c = parse_config("scenario = round_sphere\nn = 5\nA0 = 1\nengine = ode\nexpect = long_time\n");
    CHECK(run_scenario(c).exit_code == kExitSingular);
  }
  SUBCASE("a singularity that never comes") {
    const auto c = parse_config("scenario = round_sphere\nn = 3\nengine = ode\nexpect = singular\nt_end = 1\n");
    const auto s = run_scenario(c);
    CHECK(s.exit_code == kExitInvariant);
    CHECK(!s.violations.empty());
  }
  SUBCASE("missing snapshot is a configuration error") {
    const auto c = parse_config("scenario = custom\nsnapshot = /nonexistent/file.txt\n");
    CHECK(run_scenario(c).exit_code == kExitConfig);
  }
  SUBCASE("numerical failure") {
    const auto c = parse_config("scenario = so3_dumbbell\nN = 32\nt_end = 1\n[pde]\nmin_dt = 1\n");
    CHECK(run_scenario(c).exit_code == kExitNumerical);
  }
}

TEST_CASE("runs are deterministic") {
  const auto c = parse_config("scenario = warped_tube\nprofile = random\nseed = 3\nN = 32\nt_end = 1e-6\ntime_units = absolute\n");
  const auto a = scratch("det_a"), b = scratch("det_b");
  run_scenario(c, a.string());
  run_scenario(c, b.string());
  CHECK(slurp(a / "diagnostics.csv") == slurp(b / "diagnostics.csv"));
  CHECK(slurp(a / "summary.json") == slurp(b / "summary.json"));
  CHECK(!slurp(a / "diagnostics.csv").empty());
}

TEST_CASE("sweep over the S^2 x S^1 family") {
  const std::string tmpl = "scenario = product_s2_s1\nengine = ode\nt_end = 1\n";
  const auto grid = parse_grid("A0\n16\n4\n8\n");
  const auto rows = sweep(tmpl, grid, 3);
  REQUIRE(rows.size() == 3);
  const double a[] = {16.0, 4.0, 8.0};
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(rows[i].values[0] == grid.rows[i][0]);
    CHECK(rows[i].status == "ok");
    const double fa2 = rows[i].summary.initial.F * a[i] * a[i];
    CHECK(fa2 == doctest::Approx(rows[0].summary.initial.F * 256.0).epsilon(0.05));
    CHECK(rows[i].summary.diam0.lower / std::sqrt(a[i]) ==
          doctest::Approx(rows[0].summary.diam0.lower / 4.0).epsilon(0.1));
    // the flow expands the sphere factor
    CHECK(rows[i].summary.scales(0) > rows[i].summary.scales0(0));
  }

  // the same family on the warped-product engine, F from the discretization
  const auto pde = sweep("scenario = product_s2_s1\nN = 32\nt_end = 1e-6\ntime_units = absolute\n", grid, 2);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(pde[i].status == "ok");
    CHECK(pde[i].summary.initial.F * a[i] * a[i] == doctest::Approx(16.0 * kPi * kPi).epsilon(1e-10));
    CHECK(pde[i].summary.diam0.lower / std::sqrt(a[i]) == doctest::Approx(kPi).epsilon(1e-12));
  }

  std::ostringstream out;
  write_sweep_csv(out, grid, rows);
  std::istringstream in(out.str());
  std::string header, line;
  std::getline(in, header);
  CHECK(header.rfind("index,A0,status,exit_code,termination,curvature_norm,rhs_mode,", 0) == 0);
  std::getline(in, line);
  CHECK(line.rfind("0,16,ok,0,", 0) == 0);
}

TEST_CASE("sweep records failures and keeps going") {
  const auto grid = parse_grid("scenario.neck_depth, N\n0.5, 32\n1.5, 32\n0.3, 8\n");
  const auto rows = sweep("scenario = so3_dumbbell\nt_end = 0.005\n", grid);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].status == "ok");
  CHECK(rows[1].status.rfind("config:", 0) == 0);
  CHECK(rows[2].status.rfind("config:", 0) == 0);

  const auto empty = sweep("scenario = so3_dumbbell\n", parse_grid("A0\n"));
  CHECK(empty.empty());
  std::ostringstream out;
  write_sweep_csv(out, parse_grid("A0\n"), empty);
  const std::string text = out.str();
  CHECK(std::count(text.begin(), text.end(), '\n') == 1);

  CHECK_THROWS_AS(parse_grid("nonsense\n1\n"), Error);
  CHECK_THROWS_AS(parse_grid("A0 B0\n1\n"), Error);
}
