#include "l2flow/geometry.hpp"

#include "l2flow/stencil.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

namespace l2flow {

namespace {

constexpr Eigen::Index kMinNodes = 16;

Vec quadrature_weights(Topology topology, Eigen::Index n, double dx, Quadrature q) {
  Vec w(n);
  if (q == Quadrature::Trapezoid) {
    w.setConstant(dx);
    if (topology == Topology::SphereSO3) {
      w(0) *= 0.5;
      w(n - 1) *= 0.5;
    }
    return w;
  }
  if (topology == Topology::SphereSO3) {
    if (n % 2 == 0) throw Error(ErrorCode::GridError, "Simpson quadrature on S^3 needs an odd node count");
    for (Eigen::Index i = 0; i < n; ++i) w(i) = (i % 2 == 1 ? 4.0 : 2.0) * dx / 3.0;
    w(0) = w(n - 1) = dx / 3.0;
  } else {
    if (n % 2 == 1) throw Error(ErrorCode::GridError, "periodic Simpson quadrature needs an even node count");
    for (Eigen::Index i = 0; i < n; ++i) w(i) = (i % 2 == 1 ? 4.0 : 2.0) * dx / 3.0;
  }
  return w;
}

// Even extrapolation of a nodal quantity to a pole from the next two nodes,
// at arclength distances d1 < d2 from the pole.
double pole_limit(double f1, double f2, double d1, double d2) {
  return (d2 * d2 * f1 - d1 * d1 * f2) / (d2 * d2 - d1 * d1);
}

}  // namespace

double pole_neighbour_psi(double phi1, double phi2, double psi2, double dx) {
  // psi_x at the pole with odd ghosts is (16 psi_1 - 2 psi_2) / (12 dx);
  // setting it to phi_pole = (4 phi_1 - phi_2) / 3 and solving for psi_1.
  return 0.25 * dx * (4.0 * phi1 - phi2) + 0.125 * psi2;
}

std::string_view to_string(Topology topology) {
  return topology == Topology::SphereSO3 ? "sphere_so3" : "circle_product";
}

Topology topology_from_string(std::string_view s) {
  if (s == "sphere_so3") return Topology::SphereSO3;
  if (s == "circle_product") return Topology::CircleProduct;
  throw Error(ErrorCode::ValidationError, "unknown topology '" + std::string(s) + "'");
}

std::string_view to_string(Quadrature q) { return q == Quadrature::Simpson ? "simpson" : "trapezoid"; }

Quadrature quadrature_from_string(std::string_view s) {
  if (s == "trapezoid") return Quadrature::Trapezoid;
  if (s == "simpson") return Quadrature::Simpson;
  throw Error(ErrorCode::ValidationError, "unknown quadrature '" + std::string(s) + "'");
}

FiberSpec FiberSpec::hyperbolic(int genus, double mu1, double inj_scale) {
  if (genus < 2) throw Error(ErrorCode::ValidationError, "hyperbolic fiber needs genus >= 2");
  return {-1, 4.0 * kPi * (genus - 1), mu1, inj_scale};
}

void FiberSpec::validate() const {
  if (k_sigma != 1 && k_sigma != -1)
    throw Error(ErrorCode::ValidationError, "k_sigma must be +1 or -1 (flat fibers are excluded)");
  if (!(area > 0.0)) throw Error(ErrorCode::ValidationError, "fiber_area must be positive");
  if (!(mu1 >= 0.0)) throw Error(ErrorCode::ValidationError, "fiber_mu1 must be nonnegative");
  if (!(inj_scale > 0.0)) throw Error(ErrorCode::ValidationError, "fiber injectivity scale must be positive");
}

Vec uniform_grid(Topology topology, Eigen::Index n, double period, double x0) {
  if (n < 2) throw Error(ErrorCode::GridError, "grid needs at least two nodes");
  if (topology == Topology::SphereSO3) return Vec::LinSpaced(n, -1.0, 1.0);
  Vec x(n);
  for (Eigen::Index i = 0; i < n; ++i) x(i) = x0 + period * static_cast<double>(i) / static_cast<double>(n);
  return x;
}

WarpedMetric from_profile(Topology topology, const FiberSpec& fiber, Vec x, Vec phi, Vec psi,
                          const GeometryOptions& options) {
  fiber.validate();
  const Eigen::Index n = x.size();
  if (n < kMinNodes) throw Error(ErrorCode::GridError, "need at least 16 nodes, got " + std::to_string(n));
  if (phi.size() != n || psi.size() != n) throw Error(ErrorCode::GridError, "x, phi and psi differ in length");
  if (!x.allFinite() || !phi.allFinite() || !psi.allFinite())
    throw Error(ErrorCode::GridError, "non-finite samples");

  double span = 0.0;
  if (topology == Topology::SphereSO3) {
    if (std::abs(x(0) + 1.0) > 1e-12 || std::abs(x(n - 1) - 1.0) > 1e-12)
      throw Error(ErrorCode::GridError, "S^3 grids must include the endpoints -1 and 1");
    span = 2.0;
  }
  const double dx = topology == Topology::SphereSO3 ? span / static_cast<double>(n - 1)
                                                     : (x(n - 1) - x(0)) / static_cast<double>(n - 1);
  if (!(dx > 0.0)) throw Error(ErrorCode::GridError, "grid must be strictly increasing");
  for (Eigen::Index i = 1; i < n; ++i) {
    const double step = x(i) - x(i - 1);
    if (!(step > 0.0)) throw Error(ErrorCode::GridError, "grid must be strictly increasing");
    if (std::abs(step - dx) > 1e-8 * dx) throw Error(ErrorCode::GridError, "grid must be uniform in x");
  }
  if (topology == Topology::CircleProduct) span = dx * static_cast<double>(n);

  if ((phi.array() <= 0.0).any()) throw Error(ErrorCode::NonPositiveDensity, "phi must be positive");
  const Eigen::Index first = topology == Topology::SphereSO3 ? 1 : 0;
  const Eigen::Index last = topology == Topology::SphereSO3 ? n - 2 : n - 1;
  if ((psi.segment(first, last - first + 1).array() <= 0.0).any())
    throw Error(ErrorCode::NonPositiveDensity, "psi must be positive away from the poles");

  if (topology == Topology::SphereSO3) {
    const double scale = psi.cwiseAbs().maxCoeff();
    if (std::abs(psi(0)) > 1e-12 * scale || std::abs(psi(n - 1)) > 1e-12 * scale)
      throw Error(ErrorCode::BoundaryViolation, "psi must vanish at both poles");
    psi(0) = psi(n - 1) = 0.0;
    phi(0) = (4.0 * phi(1) - phi(2)) / 3.0;
    phi(n - 1) = (4.0 * phi(n - 2) - phi(n - 3)) / 3.0;
    if (phi(0) <= 0.0 || phi(n - 1) <= 0.0)
      throw Error(ErrorCode::NonPositiveDensity, "phi reflected to the poles is not positive");
  }

  WarpedMetric m;
  m.topology_ = topology;
  m.fiber_ = fiber;
  m.options_ = options;
  m.x_ = std::move(x);
  m.phi_ = std::move(phi);
  m.psi_ = std::move(psi);
  m.dx_ = dx;
  m.span_ = span;
  m.weights_ = quadrature_weights(topology, n, dx, options.quadrature);

  if (topology == Topology::SphereSO3) {
    const double defect = pole_slope_defect(m);
    if (!(defect <= options.pole_slope_tol))
      throw Error(ErrorCode::BoundaryViolation,
                  "psi_s at the poles deviates from -/+1 by " + std::to_string(defect));
    // Small defects are projected away: psi next to each pole is slaved so
    // the discrete pole slope is exactly -/+1.
    m.psi_(1) = pole_neighbour_psi(m.phi_(1), m.phi_(2), m.psi_(2), dx);
    m.psi_(n - 2) = pole_neighbour_psi(m.phi_(n - 2), m.phi_(n - 3), m.psi_(n - 3), dx);
  }
  return m;
}

WarpedMetric WarpedMetric::with_profile(Vec phi, Vec psi) const {
  return from_profile(topology_, fiber_, x_, std::move(phi), std::move(psi), options_);
}

WarpedMetric WarpedMetric::with_options(const GeometryOptions& options) const {
  return from_profile(topology_, fiber_, x_, phi_, psi_, options);
}

Arclength arclength(const WarpedMetric& m) {
  // Trapezoid increments with the Euler-Maclaurin end correction
  // -dx^2/12 (phi'_{i+1} - phi'_i). The corrections telescope, so L is the
  // plain trapezoid sum (phi' vanishes at the poles and wraps on circles),
  // while the cumulative s(x_i) becomes fourth order.
  const Eigen::Index n = m.size();
  const double dx = m.dx();
  const Vec& phi = m.phi();
  auto phi_x = [&](Eigen::Index i) {
    const auto l = stencil::neighbour(m, i, -1), r = stencil::neighbour(m, i, 1);
    return (phi(r.node) - phi(l.node)) / (2.0 * dx);
  };
  Vec s(n);
  s(0) = 0.0;
  for (Eigen::Index i = 1; i < n; ++i)
    s(i) = s(i - 1) + 0.5 * dx * (phi(i - 1) + phi(i)) - dx * dx / 12.0 * (phi_x(i) - phi_x(i - 1));
  double L = 0.5 * dx * (phi.sum() + phi.sum() - phi(0) - phi(n - 1));
  if (m.periodic()) L = dx * phi.sum();
  return {std::move(s), L};
}

PsiDerivatives psi_derivatives(const WarpedMetric& m) {
  const Eigen::Index n = m.size();
  PsiDerivatives d{Vec(n), Vec(n)};
  std::array<double, stencil::kPsiWidth> psi{};
  std::array<double, stencil::kPhiWidth> phi{};
  for (Eigen::Index i = 0; i < n; ++i) {
    stencil::gather(m, i, psi, phi);
    const auto v = stencil::derivatives(psi, phi, m.dx());
    d.psi_s(i) = v.psi_s;
    d.psi_ss(i) = v.psi_ss;
  }
  return d;
}

double pole_slope_defect(const WarpedMetric& m) {
  if (m.periodic()) return 0.0;
  const Eigen::Index n = m.size();
  std::array<double, stencil::kPsiWidth> psi{};
  std::array<double, stencil::kPhiWidth> phi{};
  stencil::gather(m, 0, psi, phi);
  const double left = stencil::derivatives(psi, phi, m.dx()).psi_s;
  stencil::gather(m, n - 1, psi, phi);
  const double right = stencil::derivatives(psi, phi, m.dx()).psi_s;
  return std::max(std::abs(left - 1.0), std::abs(right + 1.0));
}

CurvatureProfile curvature_profile(const WarpedMetric& m) {
  const Eigen::Index n = m.size();
  const double k_sigma = m.fiber().k_sigma;
  CurvatureProfile c{Vec(n), Vec(n), Vec(n), Vec(n), Vec(n)};
  std::array<double, stencil::kPsiWidth> psi{};
  std::array<double, stencil::kPhiWidth> phi{};
  for (Eigen::Index i = 0; i < n; ++i) {
    if (m.is_pole(i)) continue;
    if (m.psi()(i) < m.options().psi_floor)
      throw Error(ErrorCode::DegenerateFiber, "psi = " + std::to_string(m.psi()(i)) + " at node " + std::to_string(i));
    stencil::gather(m, i, psi, phi);
    const auto v = stencil::derivatives(psi, phi, m.dx());
    c.k1(i) = -v.psi_ss / v.psi;
    c.k2(i) = (k_sigma - v.psi_s * v.psi_s) / (v.psi * v.psi);
  }
  if (m.topology() == Topology::SphereSO3) {
    const Arclength a = arclength(m);
    const auto& s = a.s;
    c.k1(0) = pole_limit(c.k1(1), c.k1(2), s(1), s(2));
    c.k1(n - 1) = pole_limit(c.k1(n - 2), c.k1(n - 3), a.L - s(n - 2), a.L - s(n - 3));
    c.k2(0) = c.k1(0);
    c.k2(n - 1) = c.k1(n - 1);
  }
  const double f = norm_factor(m.options().norm);
  c.riem_sq = f * (4.0 * c.k1.array().square() + 2.0 * c.k2.array().square());
  c.ricci_min = (2.0 * c.k1).cwiseMin(c.k1 + c.k2);
  c.scalar = 2.0 * (2.0 * c.k1 + c.k2);
  return c;
}

double volume(const WarpedMetric& m) {
  return m.fiber().area * (m.weights().array() * m.phi().array() * m.psi().array().square()).sum();
}

double energy(const WarpedMetric& m) {
  const Eigen::Index n = m.size();
  const double k_sigma = m.fiber().k_sigma;
  std::array<double, stencil::kPsiWidth> psi{};
  std::array<double, stencil::kPhiWidth> phi{};
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (m.is_pole(i)) continue;  // psi^2 |Rm|^2 vanishes at a smooth pole
    if (m.psi()(i) < m.options().psi_floor)
      throw Error(ErrorCode::DegenerateFiber, "psi = " + std::to_string(m.psi()(i)) + " at node " + std::to_string(i));
    stencil::gather(m, i, psi, phi);
    total += m.weights()(i) * stencil::node_energy_density(psi, phi, m.dx(), k_sigma);
  }
  return norm_factor(m.options().norm) * m.fiber().area * total;
}

double energy_from_profile(const WarpedMetric& m) {
  const CurvatureProfile c = curvature_profile(m);
  return m.fiber().area *
         (m.weights().array() * m.phi().array() * m.psi().array().square() * c.riem_sq.array()).sum();
}

namespace {

// psi as a function of arclength, extended oddly through the poles of S^3 and
// periodically on circles, so cubic stencils never run off the grid.
struct ArclengthSamples {
  const WarpedMetric& m;
  const Arclength& a;

  std::pair<double, double> at(Eigen::Index j) const {
    const Eigen::Index n = m.size();
    if (m.periodic()) {
      Eigen::Index q = j >= 0 ? j / n : -((-j + n - 1) / n);
      const Eigen::Index r = j - q * n;
      return {a.s(r) + static_cast<double>(q) * a.L, m.psi()(r)};
    }
    if (j < 0) return {-a.s(-j), -m.psi()(-j)};
    if (j > n - 1) {
      const Eigen::Index r = 2 * (n - 1) - j;
      return {2.0 * a.L - a.s(r), -m.psi()(r)};
    }
    return {a.s(j), m.psi()(j)};
  }

  double interpolate(double s) const {
    const Eigen::Index n = m.size();
    // Locate k with s_k <= s < s_{k+1} among the unextended nodes.
    const double* begin = a.s.data();
    Eigen::Index k = static_cast<Eigen::Index>(std::upper_bound(begin, begin + n, s) - begin) - 1;
    if (!m.periodic()) k = std::clamp<Eigen::Index>(k, 0, n - 2);
    std::array<double, 4> xs{}, ys{};
    for (int o = 0; o < 4; ++o) std::tie(xs[o], ys[o]) = at(k - 1 + o);
    double value = 0.0;
    for (int p = 0; p < 4; ++p) {
      double basis = 1.0;
      for (int q = 0; q < 4; ++q)
        if (q != p) basis *= (s - xs[q]) / (xs[p] - xs[q]);
      value += basis * ys[p];
    }
    return value;
  }
};

}  // namespace

WarpedMetric resample_arclength(const WarpedMetric& m, Eigen::Index n) {
  if (n < kMinNodes) throw Error(ErrorCode::GridError, "resampling needs at least 16 nodes");
  const Arclength a = arclength(m);
  const ArclengthSamples samples{m, a};
  const double x0 = m.x()(0);
  Vec x = uniform_grid(m.topology(), n, m.span(), x0);
  Vec phi = Vec::Constant(n, a.L / m.span());
  Vec psi(n);
  for (Eigen::Index j = 0; j < n; ++j) psi(j) = samples.interpolate(a.L * (x(j) - x(0)) / m.span());
  if (m.topology() == Topology::SphereSO3) psi(0) = psi(n - 1) = 0.0;
  return from_profile(m.topology(), m.fiber(), std::move(x), std::move(phi), std::move(psi), m.options());
}

NoncollapseQuantities noncollapse_quantities(const WarpedMetric& m) {
  const double L = arclength(m).L;
  const Vec& psi = m.psi();
  const Eigen::Index n = m.size();
  double min_psi = 0.0;
  if (m.periodic()) {
    min_psi = psi.minCoeff();
  } else {
    bool found = false;
    for (Eigen::Index i = 2; i + 2 < n; ++i) {
      if (psi(i) <= psi(i - 1) && psi(i) <= psi(i + 1) && (!found || psi(i) < min_psi)) {
        min_psi = psi(i);
        found = true;
      }
    }
    if (!found) min_psi = psi.maxCoeff();
  }
  const double inj = std::min(0.5 * L, m.fiber().inj_scale * min_psi);
  return {L, min_psi, inj};
}

WarpedMetric scaled(const WarpedMetric& m, double lambda) {
  if (!(lambda > 0.0)) throw Error(ErrorCode::ValidationError, "scale factor must be positive");
  return m.with_profile(lambda * m.phi(), lambda * m.psi());
}

}  // namespace l2flow
