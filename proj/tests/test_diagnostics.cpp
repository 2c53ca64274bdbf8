#include "doctest.h"

#include "l2flow/diagnostics.hpp"
#include "l2flow/presets.hpp"
#include "l2flow/spectral.hpp"

#include <cmath>
#include <sstream>

using namespace l2flow;

namespace {

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

WarpedMetric hyperbolic_tube(Eigen::Index n) { return presets::tube(n, 1.0, 3.0, FiberSpec::hyperbolic(2)); }

}  // namespace

TEST_CASE("lateral isoperimetric ratio") {
  // hemisphere: equator area 4 pi over half volume pi^2
  const auto s3 = presets::round_s3(401);
  CHECK(rel(lateral_isoperimetric(s3), 4.0 * kPi / std::pow(kPi * kPi, 2.0 / 3.0)) < 1e-2);

  // thin tube: the best domain is half the tube with two slices
  const auto thin = presets::tube(64, 0.1, 10.0);
  const double a = 0.01 * 4.0 * kPi;
  CHECK(rel(lateral_isoperimetric(thin), 2.0 * a / std::pow(5.0 * a, 2.0 / 3.0)) < 1e-9);

  for (const auto& m : {presets::random_smooth_s3(101, 4), presets::random_smooth_tube(64, 4)}) {
    CHECK(rel(lateral_isoperimetric(scaled(m, 3.7)), lateral_isoperimetric(m)) < 1e-10);
  }

  // refining the grid nests the old family: the minimum can only drop, up to quadrature
  const double coarse = lateral_isoperimetric(presets::dumbbell_s3(101, 0.7));
  const double fine = lateral_isoperimetric(presets::dumbbell_s3(201, 0.7));
  CHECK(fine <= coarse * (1.0 + 1e-3));
}

TEST_CASE("kpw") {
  const auto s3 = presets::round_s3(101);
  CHECK(kpw(s3, 0.0, 2.0) == 0.0);
  CHECK(kpw(s3, 0.0, 3.5) == 0.0);

  const auto hyp = hyperbolic_tube(64);
  CHECK(rel(kpw(hyp, 0.0, 2.0), volume(hyp)) < 1e-12);
  CHECK(rel(kpw(hyp, 0.0, 5.0), volume(hyp)) < 1e-12);
  CHECK(kpw(hyp, -1.0, 2.0) == 0.0);
  // lambda = -1/4: max(0, -1/2 + 1)^2 = 1/4
  CHECK(rel(kpw(hyp, -0.25, 2.0), 0.25 * volume(hyp)) < 1e-12);

  CHECK_THROWS_AS(kpw(s3, 0.1, 2.0), Error);
  CHECK_THROWS_AS(kpw(s3, 0.0, 1.5), Error);
}

TEST_CASE("Cheeger witness") {
  const auto s3 = presets::round_s3(401);
  const auto w = cheeger_witness(s3);
  CHECK(rel(w.h_upper, 4.0 / kPi) < 5e-2);
  CHECK(lambda1(s3).lambda1 <= w.lambda_upper);
  CHECK(w.cut_lo == doctest::Approx(kPi / 2).epsilon(1e-2));

  const auto bell = presets::dumbbell_s3(201, 0.95);
  const auto wb = cheeger_witness(bell);
  const double radius = std::cbrt(volume(bell) / (2.0 * kPi * kPi));
  CHECK(lambda1(bell).lambda1 <= wb.lambda_upper);
  CHECK(wb.lambda_upper < 0.05 * 3.0 / (radius * radius));
  CHECK(wb.h_upper < 0.05 * w.h_upper);

  for (const auto& m : {presets::random_smooth_s3(101, 1), presets::random_smooth_s3(101, 2),
                        presets::random_smooth_tube(64, 1), presets::random_smooth_tube(64, 2),
                        presets::pinched_tube(64, 0.1, 4.0), hyperbolic_tube(48), presets::tube(64, 0.5, 20.0)}) {
    const auto c = cheeger_witness(m);
    CHECK(lambda1(m).lambda1 <= c.lambda_upper);
    CHECK(std::isfinite(c.h_upper));
  }
}

TEST_CASE("record on the round S^3") {
  const auto m = presets::round_s3(401);
  RecordContext ctx;
  ctx.with_lambda1 = true;
  const auto r = record(0.0, m, ctx);
  CHECK(rel(r.vol, 2.0 * kPi * kPi) < 1e-4);
  CHECK(rel(r.F, 12.0 * kPi * kPi) < 1e-4);
  CHECK(rel(r.max_riem, 6.0) < 1e-3);
  CHECK(rel(r.inj_proxy, kPi / 2) < 1e-12);
  CHECK(rel(r.collapse_scalar, r.inj_proxy * r.inj_proxy * std::sqrt(r.max_riem)) < 1e-15);
  CHECK(rel(r.collapse_scalar, kPi * kPi / 4 * std::sqrt(6.0)) < 1e-3);
  CHECK(rel(r.F_tilde, std::cbrt(r.vol) * r.F) < 1e-15);
  CHECK(rel(r.lambda1, 3.0) < 1e-3);
  CHECK(r.kpw_value == 0.0);
  CHECK(!r.degenerate);
  CHECK(std::isnan(r.dt));
  CHECK(std::isnan(r.vol_residual));

  // without the spectral flag lambda1 stays a sentinel
  CHECK(std::isnan(record(0.0, m).lambda1));
}

TEST_CASE("record is scale covariant") {
  const auto m = presets::dumbbell_s3(201, 0.6);
  const double c = 2.5;
  const auto a = record(0.0, m, {.with_lambda1 = true});
  const auto b = record(0.0, scaled(m, c), {.with_lambda1 = true});
  CHECK(rel(b.collapse_scalar, a.collapse_scalar) < 1e-10);
  CHECK(rel(b.iso_lateral, a.iso_lateral) < 1e-10);
  CHECK(rel(b.F_tilde, a.F_tilde) < 1e-10);
  CHECK(rel(b.vol, a.vol * c * c * c) < 1e-12);
  CHECK(rel(b.F, a.F / c) < 1e-12);
  CHECK(rel(b.max_riem, a.max_riem / std::pow(c, 4)) < 1e-10);
  CHECK(rel(b.L, a.L * c) < 1e-12);
  CHECK(rel(b.lambda1, a.lambda1 / (c * c)) < 1e-9);
}

TEST_CASE("record flags degenerate fibers") {
  GeometryOptions o;
  o.psi_floor = 0.2;
  const auto m = presets::pinched_tube(64, 0.1, 4.0).with_options(o);
  const auto r = record(1.0, m, {.with_lambda1 = true});
  CHECK(r.degenerate);
  CHECK(std::isnan(r.F));
  CHECK(std::isnan(r.max_riem));
  CHECK(std::isnan(r.collapse_scalar));
  CHECK(std::isnan(r.lambda1));
  CHECK(std::isfinite(r.vol));
  CHECK(std::isfinite(r.iso_lateral));
  CHECK(r.t == 1.0);
}

TEST_CASE("diagnostics over a trajectory and the CSV") {
  FlowConfig cfg;
  cfg.sample_every = 20;
  cfg.regrid_every = 0;
  const auto m0 = presets::dumbbell_s3(48, 0.5);
  cfg.t_end = 200 * stable_dt(m0, cfg);
  const auto traj = run(m0, cfg);
  REQUIRE(traj.samples.size() >= 4);

  DiagnosticsOptions opts;
  opts.spectral_every = 3;
  const auto rows = diagnostics(traj, opts);
  REQUIRE(rows.size() == traj.samples.size());
  CHECK(std::isnan(rows[0].vol_residual));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].t == traj.samples[i].t);
    CHECK(rows[i].F == doctest::Approx(traj.samples[i].energy).epsilon(1e-12));
    CHECK(std::isnan(rows[i].lambda1) == !(i % 3 == 0 || i + 1 == rows.size()));
    if (i > 0) {
      CHECK(std::isfinite(rows[i].vol_residual));
      CHECK(rows[i].vol_residual < 1e-2);
      CHECK(rows[i].F <= rows[i - 1].F);
    }
  }

  std::ostringstream out;
  write_diagnostics_csv(out, rows);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == diagnostics_header());
  CHECK(line.rfind("t,dt,Vol,F,F_tilde,", 0) == 0);
  int lines = 0;
  while (std::getline(in, line)) {
    ++lines;
    CHECK(std::count(line.begin(), line.end(), ',') == 14);
  }
  CHECK(lines == static_cast<int>(rows.size()));
  CHECK(out.str().find(",nan,") != std::string::npos);
  CHECK(out.str().find("-nan") == std::string::npos);

  // an interval ending in a regrid has no residual
  cfg.regrid_every = 40;
  const auto rg = run(m0, cfg);
  const auto rrows = diagnostics(rg);
  for (std::size_t i = 1; i < rrows.size(); ++i)
    CHECK(std::isnan(rrows[i].vol_residual) == rg.samples[i].regridded);
}
