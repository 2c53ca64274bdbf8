#include "doctest.h"

#include "l2flow/geometry.hpp"
#include "l2flow/presets.hpp"

#include <cmath>
#include <functional>

using namespace l2flow;

namespace {

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

// Independent oracle: composite Gauss-Legendre (5 points per panel) of a
// closed-form integrand over [a, b].
double gauss_legendre(const std::function<double(double)>& f, double a, double b, int panels = 2000) {
  static const double xg[5] = {-0.9061798459386640, -0.5384693101056831, 0.0, 0.5384693101056831,
                               0.9061798459386640};
  static const double wg[5] = {0.2369268850561891, 0.4786286704993665, 0.5688888888888889, 0.4786286704993665,
                               0.2369268850561891};
  const double h = (b - a) / panels;
  double total = 0.0;
  for (int p = 0; p < panels; ++p) {
    const double c = a + (p + 0.5) * h;
    for (int k = 0; k < 5; ++k) total += 0.5 * h * wg[k] * f(c + 0.5 * h * xg[k]);
  }
  return total;
}

// Dumbbell psi(s) = sin s (1 - d sin^2 s) and its arclength derivatives.
struct DumbbellProfile {
  double d;
  double psi(double s) const { return std::sin(s) * (1.0 - d * std::pow(std::sin(s), 2)); }
  double psi_s(double s) const { return std::cos(s) * (1.0 - 3.0 * d * std::pow(std::sin(s), 2)); }
  double psi_ss(double s) const {
    const double sn = std::sin(s), cs = std::cos(s);
    return -sn * (1.0 - 3.0 * d * sn * sn) - 6.0 * d * sn * cs * cs;
  }
};

WarpedMetric two_length_sphere(Eigen::Index n) {
  // phi = 1 on [-1, 1] with psi(s) = (2/pi) sin(pi s / 2), s = x + 1.
  Vec x = uniform_grid(Topology::SphereSO3, n);
  Vec psi = (2.0 / kPi) * (0.5 * kPi * (x.array() + 1.0)).sin();
  psi(0) = psi(n - 1) = 0.0;
  return from_profile(Topology::SphereSO3, FiberSpec::round_sphere(), x, Vec::Ones(n), psi);
}

}  // namespace

TEST_CASE("from_profile accepts the canonical presets") {
  CHECK_NOTHROW(presets::round_s3(64));
  CHECK_NOTHROW(presets::tube(32, 2.0, 1.0));
  const auto m = presets::round_s3(64);
  CHECK(m.topology() == Topology::SphereSO3);
  CHECK(m.psi()(0) == 0.0);
  CHECK(m.psi()(63) == 0.0);
}

TEST_CASE("from_profile rejects invalid samples") {
  const Eigen::Index n = 64;
  Vec x = uniform_grid(Topology::SphereSO3, n);
  Vec phi = Vec::Constant(n, 0.5 * kPi);
  Vec psi = (0.5 * kPi * x.array()).cos();

  SUBCASE("psi nonzero at the poles") {
    Vec bad = psi;
    bad(0) = bad(n - 1) = 0.1;
    try {
      from_profile(Topology::SphereSO3, FiberSpec::round_sphere(), x, phi, bad);
      FAIL("expected BoundaryViolation");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::BoundaryViolation);
    }
  }
  SUBCASE("pole slope wrong") {
    Vec bad = 0.7 * psi;
    bad(0) = bad(n - 1) = 0.0;
    try {
      from_profile(Topology::SphereSO3, FiberSpec::round_sphere(), x, phi, bad);
      FAIL("expected BoundaryViolation");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::BoundaryViolation);
    }
  }
  SUBCASE("too few nodes") {
    try {
      presets::round_s3(8);
      FAIL("expected GridError");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::GridError);
    }
  }
  SUBCASE("non-monotone grid") {
    Vec xc = uniform_grid(Topology::CircleProduct, 32, 1.0);
    std::swap(xc(3), xc(4));
    try {
      from_profile(Topology::CircleProduct, FiberSpec::round_sphere(), xc, Vec::Ones(32), Vec::Ones(32));
      FAIL("expected GridError");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::GridError);
    }
  }
  SUBCASE("nonpositive densities") {
    Vec xc = uniform_grid(Topology::CircleProduct, 32, 1.0);
    Vec p = Vec::Ones(32);
    p(5) = 0.0;
    CHECK_THROWS_AS(from_profile(Topology::CircleProduct, FiberSpec::round_sphere(), xc, p, Vec::Ones(32)), Error);
    Vec q = Vec::Ones(32);
    q(7) = -1.0;
    try {
      from_profile(Topology::CircleProduct, FiberSpec::round_sphere(), xc, Vec::Ones(32), q);
      FAIL("expected NonPositiveDensity");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::NonPositiveDensity);
    }
  }
  SUBCASE("flat fibers are excluded") {
    FiberSpec flat;
    flat.k_sigma = 0;
    CHECK_THROWS_AS(presets::tube(32, 1.0, 1.0, flat), Error);
  }
}

TEST_CASE("arclength") {
  const auto a = arclength(two_length_sphere(64));
  CHECK(a.L == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(a.s(0) == 0.0);

  const auto round = arclength(presets::round_s3(128));
  CHECK(round.L == doctest::Approx(kPi).epsilon(1e-14));

  const double c = 1.7;
  const auto circle = from_profile(Topology::CircleProduct, FiberSpec::round_sphere(),
                                   uniform_grid(Topology::CircleProduct, 40, 1.0), Vec::Constant(40, c),
                                   Vec::Ones(40));
  CHECK(arclength(circle).L == doctest::Approx(c).epsilon(1e-14));

  // Non-arclength gauge of the round sphere still has L = pi to quadrature accuracy.
  CHECK(rel(arclength(presets::round_s3_warped_gauge(128)).L, kPi) < 1e-6);
}

TEST_CASE("curvature of the round sphere, tubes and hyperbolic tubes") {
  const auto m = presets::round_s3(400);
  const auto c = curvature_profile(m);
  CHECK((c.k1.array() - 1.0).abs().maxCoeff() < 1e-4);
  CHECK((c.k2.array() - 1.0).abs().maxCoeff() < 1e-4);
  CHECK((c.scalar.array() - 6.0).abs().maxCoeff() < 1e-3);
  CHECK((c.riem_sq.array() - 6.0).abs().maxCoeff() < 1e-3);

  const auto full = curvature_profile(presets::round_s3(400, {.norm = CurvatureNorm::Full}));
  CHECK((full.riem_sq.array() - 12.0).abs().maxCoeff() < 2e-3);

  const auto tube = curvature_profile(presets::tube(32, 2.0, 1.0));
  CHECK(tube.k1.cwiseAbs().maxCoeff() < 1e-14);
  CHECK((tube.k2.array() - 0.25).abs().maxCoeff() < 1e-14);

  const auto hyp = curvature_profile(presets::tube(32, 1.0, 1.0, FiberSpec::hyperbolic(2)));
  CHECK((hyp.k2.array() + 1.0).abs().maxCoeff() < 1e-14);
  CHECK((hyp.ricci_min.array() + 1.0).abs().maxCoeff() < 1e-14);
}

TEST_CASE("curvature invariants hold on random metrics") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    for (const auto& m : {presets::random_smooth_tube(96, seed), presets::random_smooth_s3(97, seed)}) {
      const auto c = curvature_profile(m);
      CHECK(c.riem_sq.minCoeff() >= 0.0);
      CHECK(((c.ricci_min - c.scalar / 3.0).array() <= 1e-12).all());
      if (m.topology() == Topology::SphereSO3) {
        CHECK(c.k1(0) == c.k2(0));
        CHECK(c.k1(96) == c.k2(96));
      }
    }
  }
}

TEST_CASE("degenerate fiber floor") {
  GeometryOptions opts;
  opts.psi_floor = 0.5;
  const auto m = presets::pinched_tube(64, 0.05, 4.0, FiberSpec::round_sphere(), opts);
  try {
    energy(m);
    FAIL("expected DegenerateFiber");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DegenerateFiber);
  }
  CHECK_THROWS_AS(curvature_profile(m), Error);
}

TEST_CASE("volume and energy closed forms") {
  const auto m = presets::round_s3(400);
  CHECK(rel(volume(m), 2.0 * kPi * kPi) < 1e-10);
  CHECK(rel(energy(m), 12.0 * kPi * kPi) < 1e-4);

  const auto tube = presets::tube(32, 2.0, 1.0);
  CHECK(rel(volume(tube), 16.0 * kPi) < 1e-14);
  // Brute-force oracle: integrand 2 (1 - 0)^2 / 4 = 1/2 per unit length times the fiber area.
  const double oracle = 4.0 * kPi * gauss_legendre([](double) { return 0.5; }, 0.0, 1.0);
  CHECK(rel(energy(tube), oracle) < 1e-12);
  CHECK(rel(energy(tube), 2.0 * kPi) < 1e-12);
}

TEST_CASE("energy matches an independent quadrature of the closed-form dumbbell integrand") {
  const DumbbellProfile p{0.5};
  const double oracle = 4.0 * kPi * gauss_legendre(
                                        [&](double s) {
                                          const double fib = 1.0 - std::pow(p.psi_s(s), 2);
                                          const double psi = p.psi(s);
                                          if (psi == 0.0) return 0.0;
                                          return 4.0 * std::pow(p.psi_ss(s), 2) + 2.0 * fib * fib / (psi * psi);
                                        },
                                        0.0, kPi);
  const double coarse = std::abs(energy(presets::dumbbell_s3(201)) - oracle);
  const double fine = std::abs(energy(presets::dumbbell_s3(401)) - oracle);
  CHECK(fine / oracle < 1e-4);
  CHECK(coarse / fine > 3.5);
}

TEST_CASE("two evaluation paths of the energy agree") {
  for (std::uint64_t seed = 11; seed <= 14; ++seed) {
    for (const auto& m : {presets::random_smooth_tube(128, seed), presets::random_smooth_s3(129, seed),
                          presets::dumbbell_s3(101, 0.8)}) {
      CHECK(rel(energy_from_profile(m), energy(m)) < 1e-10);
    }
  }
}

TEST_CASE("scaling laws") {
  for (const auto& m : {presets::random_smooth_tube(64, 3), presets::random_smooth_s3(65, 3)}) {
    const double v = volume(m), f = energy(m);
    const auto c = curvature_profile(m);
    for (double lambda : {0.5, 2.0}) {
      const auto ms = scaled(m, lambda);
      CHECK(rel(volume(ms), std::pow(lambda, 3) * v) < 1e-13);
      CHECK(rel(energy(ms), std::pow(lambda, -1) * f) < 1e-13);  // lambda^(n/2 - 2), n = 3
      const auto cs = curvature_profile(ms);
      CHECK((cs.k1 - c.k1 / (lambda * lambda)).cwiseAbs().maxCoeff() < 1e-12 * c.k1.cwiseAbs().maxCoeff() + 1e-12);
      CHECK((cs.k2 - c.k2 / (lambda * lambda)).cwiseAbs().maxCoeff() < 1e-12 * c.k2.cwiseAbs().maxCoeff() + 1e-12);
    }
  }
}

TEST_CASE("second-order grid convergence on the round sphere") {
  auto errors = [](Eigen::Index n) {
    const auto m = presets::round_s3(n);
    const auto c = curvature_profile(m);
    return std::array<double, 3>{std::abs(energy(m) - 12.0 * kPi * kPi), (c.k1.array() - 1.0).abs().maxCoeff(),
                                 (c.k2.array() - 1.0).abs().maxCoeff()};
  };
  const auto e1 = errors(101), e2 = errors(201), e3 = errors(401);
  for (int k = 0; k < 3; ++k) {
    CHECK(e1[k] / e2[k] >= 3.5);
    CHECK(e2[k] / e3[k] >= 3.5);
  }
  // The volume integrand of a smooth S^3 metric reflects evenly through both
  // poles, so the trapezoid rule is spectrally accurate even in a warped gauge. What
  // remains is the pole-neighbour projection, O(dx^5) here.
  CHECK(std::abs(volume(presets::round_s3_warped_gauge(101)) / (2.0 * kPi * kPi) - 1.0) < 1e-10);
}

TEST_CASE("pole consistency: k2 - k1 at the first interior node vanishes under refinement") {
  double previous = 1e300;
  for (Eigen::Index n : {33, 65, 129, 257}) {
    const auto c = curvature_profile(presets::dumbbell_s3(n, 0.5));
    const double gap = std::abs(c.k2(1) - c.k1(1));
    CHECK(gap < previous);
    previous = gap;
  }
  CHECK(previous < 1e-2);
}

TEST_CASE("resample_arclength") {
  SUBCASE("idempotent on an arclength-uniform metric") {
    const auto m = presets::round_s3(101);
    const auto r = resample_arclength(m, 101);
    CHECK((r.psi() - m.psi()).cwiseAbs().maxCoeff() < 1e-13);
    CHECK((r.phi() - m.phi()).cwiseAbs().maxCoeff() < 1e-13);
  }
  SUBCASE("non-uniform round sphere keeps its volume at double resolution") {
    const auto m = presets::round_s3_warped_gauge(128);
    const auto r = resample_arclength(m, 256);
    CHECK(rel(volume(r), volume(m)) < 1e-6);
    CHECK(rel(energy(r), energy(m)) < 1e-3);
    CHECK((r.phi().array() - r.phi()(0)).abs().maxCoeff() < 1e-14);
  }
  SUBCASE("periodic metric") {
    const auto m = presets::random_smooth_tube(128, 9);
    const auto r = resample_arclength(m, 128);
    CHECK(rel(volume(r), volume(m)) < 1e-6);
    CHECK(rel(energy(r), energy(m)) < 1e-3);
    CHECK(rel(arclength(r).L, arclength(m).L) < 1e-14);
  }
  SUBCASE("curvature profile survives regridding") {
    const auto m = presets::round_s3_warped_gauge(201);
    const auto c = curvature_profile(resample_arclength(m, 201));
    CHECK((c.k1.array() - 1.0).abs().maxCoeff() < 1e-3);
    CHECK((c.k2.array() - 1.0).abs().maxCoeff() < 1e-3);
  }
  SUBCASE("too few nodes") {
    try {
      resample_arclength(presets::round_s3(64), 12);
      FAIL("expected GridError");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::GridError);
    }
  }
}

TEST_CASE("noncollapse quantities") {
  const auto tube = presets::tube(32, 1.0, 2.0);
  const auto q = noncollapse_quantities(tube);
  CHECK(q.L == doctest::Approx(2.0));
  CHECK(q.min_psi == doctest::Approx(1.0));
  CHECK(q.inj_proxy == doctest::Approx(1.0));

  const auto m = presets::random_smooth_tube(64, 4);
  const auto a = noncollapse_quantities(m);
  const auto b = noncollapse_quantities(scaled(m, 3.0));
  CHECK(b.L == doctest::Approx(3.0 * a.L));
  CHECK(b.min_psi == doctest::Approx(3.0 * a.min_psi));
  CHECK(b.inj_proxy == doctest::Approx(3.0 * a.inj_proxy));

  const auto pinched = noncollapse_quantities(presets::dumbbell_s3(201, 0.95));
  CHECK(pinched.min_psi == doctest::Approx(0.05).epsilon(1e-9));
  CHECK(pinched.inj_proxy == doctest::Approx(kPi * 0.05).epsilon(1e-9));
}
