#include "doctest.h"

#include "l2flow/presets.hpp"
#include "l2flow/spectral.hpp"

#include <cmath>

using namespace l2flow;

namespace {

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

ScalarProfile cos_s(const WarpedMetric& m) { return {arclength(m).s.array().cos().matrix(), 0}; }

double lap_cos_error(Eigen::Index n) {
  const auto m = presets::round_s3(n);
  const auto f = cos_s(m);
  return (laplace_apply(f, m).values + 3.0 * f.values).cwiseAbs().maxCoeff();
}

FlowTrajectory every_step(const WarpedMetric& m0, double steps, int regrid_every = 0) {
  FlowConfig cfg;
  cfg.sample_every = 1;
  cfg.regrid_every = regrid_every;
  cfg.t_end = steps * stable_dt(m0, cfg);
  return run(m0, cfg);
}

// g frozen at m over [0, T]
FlowTrajectory static_trajectory(const WarpedMetric& m, double T, int samples) {
  FlowTrajectory traj;
  for (int i = 0; i <= samples; ++i) {
    const double t = T * i / samples;
    traj.samples.push_back({t, i ? T / samples : 0.0, m, TangentField::zero(m.size()), volume(m), energy(m), 0.0,
                            0.0, false});
  }
  return traj;
}

}  // namespace

TEST_CASE("laplace_apply") {
  const auto m = presets::random_smooth_s3(101, 3);
  const ScalarProfile one{Vec::Ones(101), 0};
  CHECK(laplace_apply(one, m).values.cwiseAbs().maxCoeff() < 1e-9);
  const auto t = presets::random_smooth_tube(64, 3);
  CHECK(laplace_apply({Vec::Ones(64), 0}, t).values.cwiseAbs().maxCoeff() < 1e-9);

  // -f'' - 2 cot(s) f' = 3 cos s
  const double e1 = lap_cos_error(101), e2 = lap_cos_error(201), e3 = lap_cos_error(401);
  CHECK(e3 < 1e-4);
  CHECK(e1 / e2 >= 3.5);
  CHECK(e2 / e3 >= 3.5);

  // k = 1 vanishes at the poles
  const ScalarProfile s1{Vec::Ones(101), 1};
  const auto l1 = laplace_apply(s1, m);
  CHECK(l1.values(0) == 0.0);
  CHECK(l1.values(100) == 0.0);

  CHECK_THROWS_AS(laplace_apply({Vec::Ones(5), 0}, m), Error);
  CHECK_THROWS_AS(laplace_apply({Vec::Ones(101), 2}, m), Error);
}

TEST_CASE("first eigenvalue of the round S^3 on both branches") {
  EigenOptions k0, k1;
  k0.fiber_modes = {0};
  k1.fiber_modes = {1};
  std::vector<double> err;
  for (Eigen::Index n : {101, 201, 401, 801}) {
    const auto m = presets::round_s3(n);
    const auto a = lambda1(m, k0), b = lambda1(m, k1);
    CHECK(a.residual <= 1e-8);
    CHECK(b.residual <= 1e-8);
    CHECK(a.branch == 0);
    CHECK(b.branch == 1);
    err.push_back(std::abs(a.lambda1 - 3.0));
    if (n == 801) {
      CHECK(std::abs(a.lambda1 - 3.0) <= 1e-3);
      CHECK(std::abs(b.lambda1 - 3.0) <= 1e-3);
    }
  }
  for (std::size_t i = 1; i < err.size(); ++i) CHECK(err[i - 1] / err[i] >= 3.5);
}

TEST_CASE("eigenvalue scaling and Rayleigh quotients") {
  const auto m = presets::random_smooth_s3(201, 5);
  const auto r = lambda1(m);
  CHECK(rel(lambda1(scaled(m, 2.0)).lambda1, r.lambda1 / 4.0) < 1e-9);
  CHECK(rel(dirichlet_energy(r.eigenprofile, m), r.lambda1) < 1e-8);
  CHECK(rel(l2_norm_sq(r.eigenprofile, m), 1.0) < 1e-12);
  if (r.branch == 0) CHECK(std::abs(integral(r.eigenprofile, m)) < 1e-10);

  const ScalarProfile f = cos_s(presets::round_s3(401));
  CHECK(std::abs(dirichlet_energy(f, presets::round_s3(401)) - 3.0) < 1e-4);
  CHECK(rel(dirichlet_energy(f, scaled(presets::round_s3(401), 3.0)), dirichlet_energy(f, presets::round_s3(401)) / 9.0) <
        1e-12);

  try {
    dirichlet_energy({Vec::Zero(201), 0}, m);
    FAIL("expected ZeroFunction");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ZeroFunction);
  }

  // tubes: (2 pi / L)^2 along the circle against mu1 / r^2 on the fiber
  const auto thin = presets::tube(64, 0.5, 20.0);
  CHECK(lambda1(thin).branch == 0);
  CHECK(rel(lambda1(thin).lambda1, std::pow(2.0 * kPi / 20.0, 2)) < 1e-2);
  const auto wide = presets::tube(64, 2.0, 1.0);
  CHECK(lambda1(wide).branch == 1);
  CHECK(rel(lambda1(wide).lambda1, 0.5) < 1e-12);
}

TEST_CASE("a deep neck makes the first eigenvalue small") {
  const auto m = presets::dumbbell_s3(201, 0.95);
  CHECK(noncollapse_quantities(m).min_psi == doctest::Approx(0.05).epsilon(1e-6));
  const auto r = lambda1(m);
  const double radius = std::cbrt(volume(m) / (2.0 * kPi * kPi));
  CHECK(r.branch == 0);
  CHECK(r.lambda1 < 0.1 * 3.0 / (radius * radius));

  // the two-lobe test function: +1 and -1 on the lobes, tanh across the neck
  ScalarProfile bump{(8.0 * m.x().array()).tanh().matrix(), 0};
  const SpectralGrid g = spectral_grid(m, 0);
  bump.values.array() -= g.cell.dot(bump.values) / g.cell.sum();
  CHECK(r.lambda1 <= dirichlet_energy(bump, m));
}

TEST_CASE("biharmonic_backstep") {
  const auto m = presets::random_smooth_s3(101, 2);
  const ScalarProfile c{Vec::Constant(101, 2.5), 0};
  const auto same = biharmonic_backstep(c, m, TangentField::zero(101), biharmonic_dtau(m, 0));
  CHECK((same.values.array() - 2.5).abs().maxCoeff() < 1e-12);
  CHECK_THROWS_AS(biharmonic_backstep(c, m, TangentField::zero(101), 0.0), Error);

  // an eigenfunction decays like exp(-lambda^2 tau) on a frozen metric
  const auto round = presets::round_s3(101);
  const auto r = lambda1(round, {.fiber_modes = {0}});
  const double h = biharmonic_dtau(round, 0);
  ScalarProfile f = r.eigenprofile;
  const int steps = static_cast<int>(0.02 / (r.lambda1 * r.lambda1 * h));
  for (int i = 0; i < steps; ++i) f = biharmonic_backstep(f, round, TangentField::zero(101), h);
  const double decay = std::sqrt(l2_norm_sq(f, round));
  const double expected = std::exp(-r.lambda1 * r.lambda1 * steps * h);
  CHECK(expected < 0.99);
  CHECK(rel(decay, expected) < 1e-2);
}

TEST_CASE("backward run on a frozen metric keeps the eigenfunction") {
  const auto m = presets::dumbbell_s3(101, 0.5);
  const auto r = lambda1(m);
  const auto rep = run_backward(static_trajectory(m, 1e-4, 20), r.eigenprofile, 1.0);
  CHECK(rep.lambda_0_bound >= rep.lambda_0_true - 1e-8);
  CHECK(rel(rep.lambda_0_bound, rep.lambda_0_true) < 1e-2);
  CHECK(rep.mass_drift <= 1e-8);
  CHECK(rep.slack == doctest::Approx(rep.lambda_0_bound - 2.0 * rep.lambda_T));
}

TEST_CASE("backward run along a flow: mass, bound and evolution identities") {
  const auto traj = every_step(presets::dumbbell_s3(65, 0.6), 3000);
  REQUIRE(traj.termination == FlowTermination::ReachedEnd);
  const auto fT = lambda1(traj.samples.back().metric).eigenprofile;

  BackwardOptions coarse;
  coarse.dtau_safety = 0.1;
  const auto rep = run_backward(traj, fT, 2.0, coarse);
  CHECK(rep.mass_drift <= 1e-8);
  CHECK(rep.lambda_0_bound >= rep.lambda_0_true - 1e-8);
  CHECK(rep.sobolev_A == 2.0);
  CHECK(rep.epsilon == doctest::Approx(energy(traj.samples.front().metric)));
  REQUIRE(rep.identities.size() == 10);

  BackwardOptions fine;
  fine.dtau_safety = 0.05;
  const auto rep2 = run_backward(traj, fT, 2.0, fine);
  REQUIRE(rep2.identities.size() == 10);
  for (std::size_t i = 0; i < 10; ++i) {
    const auto& a = rep.identities[i];
    const auto& b = rep2.identities[i];
    const double e_l2 = rel(a.l2_fd, a.l2_rhs), e_h1 = rel(a.h1_fd, a.h1_rhs);
    CHECK(e_l2 <= 1e-3);
    CHECK(e_h1 <= 1e-3);
    // first order in dtau
    CHECK(rel(b.l2_fd, b.l2_rhs) <= 0.75 * e_l2);
    CHECK(rel(b.h1_fd, b.h1_rhs) <= 0.75 * e_h1);
    // the other sign on the <E, df (x) df> term is visibly wrong
    CHECK(rel(a.h1_fd, a.h1_rhs_flipped) > 100.0 * e_h1);
  }
}

TEST_CASE("backward run across regrids and on the fiber mode") {
  const auto traj = every_step(presets::random_smooth_tube(48, 4), 400, 50);
  REQUIRE(traj.termination == FlowTermination::ReachedEnd);
  EigenOptions k0;
  k0.fiber_modes = {0};
  const auto rep = run_backward(traj, lambda1(traj.samples.back().metric, k0).eigenprofile, 1.0);
  CHECK(rep.mass_drift <= 1e-8);
  CHECK(rep.lambda_0_bound >= rep.lambda_0_true - 1e-8);

  EigenOptions k1;
  k1.fiber_modes = {1};
  const auto rep1 = run_backward(traj, lambda1(traj.samples.back().metric, k1).eigenprofile, 1.0);
  CHECK(rep1.f0.fiber_mode == 1);
  CHECK(rep1.lambda_0_bound >= rep1.lambda_0_true - 1e-8);
}

TEST_CASE("run_backward needs velocities") {
  const auto m = presets::round_s3(41);
  auto traj = static_trajectory(m, 1e-5, 2);
  traj.samples[1].velocity = TangentField{};
  try {
    run_backward(traj, lambda1(m).eigenprofile, 1.0);
    FAIL("expected MissingVelocity");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MissingVelocity);
  }
}
