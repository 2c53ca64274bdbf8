#include "doctest.h"

#include "l2flow/io.hpp"
#include "l2flow/presets.hpp"

#include <cmath>
#include <sstream>

using namespace l2flow;

TEST_CASE("format_number round trips") {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, kPi}) CHECK(parse_number(format_number(v)) == v);
  CHECK(format_number(std::nan("")) == "nan");
  CHECK(format_number(-std::nan("")) == "nan");
  CHECK(format_number(-INFINITY) == "-inf");
  CHECK(std::isnan(parse_number("nan")));
  CHECK_THROWS_AS(parse_number("1.0x"), Error);
  CHECK_THROWS_AS(parse_number(""), Error);
}

TEST_CASE("snapshots round trip exactly") {
  GeometryOptions o;
  o.norm = CurvatureNorm::Full;
  o.quadrature = Quadrature::Simpson;
  for (const auto& m : {presets::random_smooth_s3(65, 9), presets::random_smooth_tube(48, 9, o),
                        presets::tube(32, 0.7, 3.0, FiberSpec::hyperbolic(3, 0.3, 0.8))}) {
    std::stringstream io;
    write_snapshot(io, m);
    const auto back = read_snapshot(io);
    CHECK(back.topology() == m.topology());
    CHECK(back.phi() == m.phi());
    CHECK(back.psi() == m.psi());
    CHECK(back.x() == m.x());
    CHECK(back.fiber().area == m.fiber().area);
    CHECK(back.fiber().k_sigma == m.fiber().k_sigma);
    CHECK(back.fiber().mu1 == m.fiber().mu1);
    CHECK(back.options().norm == m.options().norm);
    CHECK(back.options().quadrature == m.options().quadrature);
    CHECK(energy(back) == energy(m));
  }

  std::stringstream io;
  write_snapshot(io, presets::round_s3(17));
  CHECK(io.str().find("# curvature_norm=paper\n") != std::string::npos);
}

TEST_CASE("snapshot parse errors name the line") {
  std::stringstream bad("# topology=circle_product\nx phi psi\n0 1 1\n0.1 1 oops\n");
  try {
    read_snapshot(bad);
    FAIL("expected ParseError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ParseError);
    CHECK(std::string(e.what()).find("line 4") != std::string::npos);
  }
  std::stringstream nohead("# topology=circle_product\n0 1 1\n");
  CHECK_THROWS_AS(read_snapshot(nohead), Error);
  std::stringstream notop("x phi psi\n");
  CHECK_THROWS_AS(read_snapshot(notop), Error);
}

TEST_CASE("ODE trajectory CSV") {
  ProductState s;
  s.factors = {{5, FactorCurvature::Sphere, 1.0}, {1, FactorCurvature::Flat, 1.0}};
  const auto traj = integrate(s, RhsMode::PaperLiteral, 0.01);
  std::ostringstream out;
  write_ode_csv(out, traj, 5.0);
  const std::string text = out.str();
  CHECK(text.rfind("t,scale_0,scale_1,riem_sq,ratio_p,collapse_scalar,mode\n", 0) == 0);
  CHECK(text.find(",paper_literal\n") != std::string::npos);
  CHECK(std::count(text.begin(), text.end(), '\n') == static_cast<long>(traj.samples.size() + 1));

  ProductState sphere;
  sphere.factors = {{3, FactorCurvature::Sphere, 1.0}};
  std::ostringstream o2;
  write_ode_csv(o2, integrate(sphere, RhsMode::GradientDerived, 0.01), 5.0);
  CHECK(o2.str().rfind("t,scale_0,riem_sq,ratio_p,collapse_scalar,mode\n", 0) == 0);
  CHECK(o2.str().find(",nan,nan,gradient_derived\n") != std::string::npos);
}

TEST_CASE("SVG charts") {
  const Vec x = Vec::LinSpaced(5, 0.0, 1.0);
  Vec y(5);
  y << 1.0, 2.0, std::nan(""), 4.0, 5.0;
  std::ostringstream out;
  write_svg_chart(out, "F & Vol", "t", x, {{"F", y}, {"<Vol>", Vec::Constant(5, 3.0)}});
  const std::string s = out.str();
  CHECK(s.rfind("<svg", 0) == 0);
  CHECK(s.find("</svg>") != std::string::npos);
  // the NaN splits the first series in two, the constant series draws once
  std::size_t count = 0;
  for (std::size_t p = s.find("<polyline"); p != std::string::npos; p = s.find("<polyline", p + 1)) ++count;
  CHECK(count == 3);
  CHECK(s.find("F &amp; Vol") != std::string::npos);
  CHECK(s.find("&lt;Vol&gt;") != std::string::npos);
}

TEST_CASE("decay report block") {
  EigenDecayReport r{};
  r.lambda_T = 1.5;
  r.slack = -0.25;
  r.identities.push_back({0.1, 1.0, 1.0, 2.0, 2.0, 3.0});
  std::ostringstream out;
  write_decay_report(out, r);
  CHECK(out.str().find("lambda_T=1.5\n") != std::string::npos);
  CHECK(out.str().find("slack=-0.25\n") != std::string::npos);
  CHECK(out.str().find("identity_0_h1_rhs=2\n") != std::string::npos);
}
