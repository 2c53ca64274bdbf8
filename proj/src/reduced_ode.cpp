#include "l2flow/reduced_ode.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <mutex>
#include <string>

namespace l2flow {

namespace {

bool is_sphere(const Factor& f) { return f.curv == FactorCurvature::Sphere; }

// Orthonormal-frame curvature tensor of the product, stored densely.
// Sphere block of scale A has constant sectional curvature 1/A.
std::vector<double> riemann_tensor(const std::vector<Factor>& factors, int n) {
  std::vector<double> r(static_cast<std::size_t>(n) * n * n * n, 0.0);
  auto at = [&](int i, int j, int k, int l) -> double& { return r[((i * n + j) * n + k) * n + l]; };
  int offset = 0;
  for (const auto& f : factors) {
    if (is_sphere(f)) {
      const double kappa = 1.0 / f.scale;
      for (int i = offset; i < offset + f.dim; ++i)
        for (int j = offset; j < offset + f.dim; ++j)
          for (int k = offset; k < offset + f.dim; ++k)
            for (int l = offset; l < offset + f.dim; ++l)
              at(i, j, k, l) = kappa * ((i == l) * (j == k) - (i == k) * (j == l));
    }
    offset += f.dim;
  }
  return r;
}

// c_m for m = 0..kMaxCached, filled lazily by contraction.
constexpr int kMaxCached = 32;

double cached_sphere_constant(int m) {
  static std::array<double, kMaxCached + 1> table{};
  static std::once_flag once;
  std::call_once(once, [] {
    for (int k = 2; k <= kMaxCached; ++k) table[k] = sphere_riem_constant(k);
  });
  if (m > kMaxCached) return sphere_riem_constant(m);
  return table[m];
}

// Scale-only rhs: the unit-sphere constants are fixed by the shape.
struct Shape {
  std::vector<Factor> factors;
  std::vector<double> c;  // c_m for spheres, 0 for flat factors
  int sphere = -1, flat = -1;  // indices for the S^5 x S^1 literal system
  bool literal_sphere = false, literal_s5s1 = false;

  explicit Shape(const std::vector<Factor>& f) : factors(f) {
    for (const auto& fac : factors) c.push_back(is_sphere(fac) ? cached_sphere_constant(fac.dim) : 0.0);
    literal_sphere = factors.size() == 1 && is_sphere(factors[0]);
    if (factors.size() == 2) {
      for (int j = 0; j < 2; ++j) {
        if (is_sphere(factors[j]) && factors[j].dim == 5) sphere = j;
        if (!is_sphere(factors[j]) && factors[j].dim == 1) flat = j;
      }
      literal_s5s1 = sphere >= 0 && flat >= 0;
    }
  }

  double riem_sq(const Vec& a) const {
    double total = 0.0;
    for (std::size_t j = 0; j < factors.size(); ++j)
      if (c[j] != 0.0) total += c[j] / (a(j) * a(j));
    return total;
  }

  Vec rhs(const Vec& a, RhsMode mode) const {
    const Eigen::Index k = a.size();
    Vec d(k);
    if (mode == RhsMode::GradientDerived) {
      const double rs = riem_sq(a);
      for (Eigen::Index j = 0; j < k; ++j) {
        const double check = c[j] != 0.0 ? c[j] / factors[j].dim / a(j) : 0.0;
        d(j) = 2.0 * check - 0.5 * rs * a(j);
      }
      return d;
    }
    if (literal_sphere) {
      const int n = factors[0].dim;
      // (1/n - 1/4) 2n(n-1), rearranged so the integer case stays exact
      d(0) = 0.5 * (4 - n) * (n - 1) / a(0);
      return d;
    }
    if (literal_s5s1) {
      const double c5 = c[sphere], A = a(sphere), B = a(flat);
      d(sphere) = -c5 / (20.0 * A);
      d(flat) = -c5 * B / (4.0 * A * A);
      return d;
    }
    throw Error(ErrorCode::UnsupportedState,
                "PaperLiteral rates exist only for a single round sphere and for S^5 x S^1");
  }
};

}  // namespace

int ProductState::dimension() const {
  int n = 0;
  for (const auto& f : factors) n += f.dim;
  return n;
}

void ProductState::validate() const {
  if (factors.empty()) throw Error(ErrorCode::ValidationError, "product state has no factors");
  for (const auto& f : factors) {
    if (f.dim < 1) throw Error(ErrorCode::ValidationError, "factor dimension must be >= 1");
    if (is_sphere(f) && f.dim < 2) throw Error(ErrorCode::ValidationError, "a 1-sphere is a flat factor");
    if (!(f.scale > 0.0) || !std::isfinite(f.scale))
      throw Error(ErrorCode::ValidationError, "factor scale must be positive and finite");
  }
  if (dimension() < 2) throw Error(ErrorCode::ValidationError, "total dimension must be >= 2");
}

std::string_view to_string(RhsMode mode) {
  return mode == RhsMode::PaperLiteral ? "paper_literal" : "gradient_derived";
}

RhsMode rhs_mode_from_string(std::string_view s) {
  if (s == "paper_literal" || s == "paper") return RhsMode::PaperLiteral;
  if (s == "gradient_derived" || s == "gradient") return RhsMode::GradientDerived;
  throw Error(ErrorCode::ValidationError, "mode must be 'paper_literal' or 'gradient_derived', got '" +
                                              std::string(s) + "'");
}

std::string_view to_string(OdeTermination t) {
  return t == OdeTermination::ReachedEnd ? "ReachedEnd" : "SingularityDetected";
}

ProductInvariants product_invariants(const ProductState& s) {
  s.validate();
  const int n = s.dimension();
  const auto r = riemann_tensor(s.factors, n);
  auto at = [&](int i, int j, int k, int l) { return r[((i * n + j) * n + k) * n + l]; };

  ProductInvariants out;
  out.dimension = n;
  for (double v : r) out.riem_sq += v * v;

  // Rcheck_ij = R_ipqr R_jpqr; in the frame it is diagonal and constant on
  // each block, so reading the first diagonal entry of a block suffices.
  out.check_r = Vec::Zero(static_cast<Eigen::Index>(s.factors.size()));
  int offset = 0;
  for (std::size_t j = 0; j < s.factors.size(); ++j) {
    const int i = offset;
    double rc = 0.0;
    for (int p = 0; p < n; ++p)
      for (int q = 0; q < n; ++q)
        for (int w = 0; w < n; ++w) rc += at(i, p, q, w) * at(i, p, q, w);
    // frame coefficient times g = A g_unit
    out.check_r(static_cast<Eigen::Index>(j)) = rc * s.factors[j].scale;
    offset += s.factors[j].dim;
  }
  return out;
}

double sphere_riem_constant(int m) {
  ProductState unit{{{m, FactorCurvature::Sphere, 1.0}}};
  return product_invariants(unit).riem_sq;
}

Vec product_rhs(const ProductState& s, RhsMode mode) {
  s.validate();
  Shape shape(s.factors);
  Vec a(static_cast<Eigen::Index>(s.factors.size()));
  for (std::size_t j = 0; j < s.factors.size(); ++j) a(static_cast<Eigen::Index>(j)) = s.factors[j].scale;
  return shape.rhs(a, mode);
}

double mode_ratio(const ProductState& s) {
  const Vec g = product_rhs(s, RhsMode::GradientDerived);
  const Vec p = product_rhs(s, RhsMode::PaperLiteral);
  double ratio = std::numeric_limits<double>::quiet_NaN();
  for (Eigen::Index j = 0; j < g.size(); ++j) {
    if (p(j) == 0.0) {
      if (std::abs(g(j)) > 1e-12 * (1.0 + g.cwiseAbs().maxCoeff()))
        throw Error(ErrorCode::UnsupportedState, "rhs modes are not proportional");
      continue;
    }
    const double r = g(j) / p(j);
    if (std::isnan(ratio)) ratio = r;
    else if (std::abs(r - ratio) > 1e-12 * std::abs(ratio))
      throw Error(ErrorCode::UnsupportedState, "rhs modes are not proportional");
  }
  return ratio;  // NaN when both rates vanish identically (n = 4)
}

double sphere_rate(int n, RhsMode mode) {
  if (n < 2) throw Error(ErrorCode::ValidationError, "sphere dimension must be >= 2");
  if (mode == RhsMode::PaperLiteral) return 0.5 * (4 - n) * (n - 1);
  return (4 - n) * cached_sphere_constant(n) / (2.0 * n);
}

double sphere_lifespan(int n, double A0, RhsMode mode) {
  const double beta = sphere_rate(n, mode);
  if (beta >= 0.0) return std::numeric_limits<double>::infinity();
  return A0 * A0 / (-2.0 * beta);
}

double analytic_sphere(int n, double A0, double t, RhsMode mode) {
  if (!(A0 > 0.0)) throw Error(ErrorCode::ValidationError, "A0 must be positive");
  if (t >= sphere_lifespan(n, A0, mode))
    throw Error(ErrorCode::PastSingularTime, "t = " + std::to_string(t) + " is at or past the singular time");
  return std::sqrt(A0 * A0 + 2.0 * sphere_rate(n, mode) * t);
}

ProductState OdeTrajectory::state(std::size_t i) const {
  ProductState s{shape, samples.at(i).t};
  for (std::size_t j = 0; j < shape.size(); ++j) s.factors[j].scale = samples[i].scales(static_cast<Eigen::Index>(j));
  return s;
}

OdeTrajectory integrate(const ProductState& s0, RhsMode mode, double t_end, const OdeOptions& opts) {
  s0.validate();
  if (!(t_end > s0.t)) throw Error(ErrorCode::ValidationError, "t_end must be after the initial time");

  // Dormand-Prince 5(4) tableau
  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                          a65 = -5103.0 / 18656;
  static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                          b6 = 11.0 / 84;
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                          e6 = 22.0 / 525, e7 = -1.0 / 40;
  (void)c2, (void)c3, (void)c4, (void)c5;  // autonomous system

  const Shape shape(s0.factors);
  OdeTrajectory traj;
  traj.shape = s0.factors;
  traj.mode = mode;

  const Eigen::Index k = static_cast<Eigen::Index>(s0.factors.size());
  Vec y(k);
  for (Eigen::Index j = 0; j < k; ++j) y(j) = s0.factors[static_cast<std::size_t>(j)].scale;
  double t = s0.t;
  traj.samples.push_back({t, y, shape.riem_sq(y)});

  Vec k1 = shape.rhs(y, mode);
  double h = opts.h0;
  if (h <= 0.0) {
    const double rate = (k1.array() / y.array()).abs().maxCoeff();
    h = rate > 0.0 ? 1e-3 / rate : 1e-3 * (t_end - t);
  }

  auto singular_estimate = [&](const Vec& a, const Vec& da) {
    // Only curvature-driven (sphere) scales have A^2 affine near the end;
    // flat factors collapse at other rates.
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < a.size(); ++j)
      if (da(j) < 0.0 && is_sphere(s0.factors[static_cast<std::size_t>(j)]))
        best = std::min(best, t + a(j) / (2.0 * -da(j)));
    return std::isfinite(best) ? best : t;
  };

  const double ceiling_sq = opts.riem_ceiling * opts.riem_ceiling;
  std::size_t steps = 0;
  while (t < t_end) {
    if (++steps > opts.max_steps) throw Error(ErrorCode::StepSizeUnderflow, "step budget exhausted");
    h = std::min(h, t_end - t);
    const double eps_t = 16.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(t));
    if (h < eps_t) {
      if ((k1.array() < 0.0).any()) {
        traj.termination = OdeTermination::SingularityDetected;
        traj.t_sing = singular_estimate(y, k1);
        return traj;
      }
      throw Error(ErrorCode::StepSizeUnderflow, "step size underflow at t = " + std::to_string(t));
    }

    const Vec y2 = y + h * a21 * k1;
    const Vec k2 = shape.rhs(y2, mode);
    const Vec y3 = y + h * (a31 * k1 + a32 * k2);
    const Vec k3 = shape.rhs(y3, mode);
    const Vec y4 = y + h * (a41 * k1 + a42 * k2 + a43 * k3);
    const Vec k4 = shape.rhs(y4, mode);
    const Vec y5 = y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
    const Vec k5 = shape.rhs(y5, mode);
    const Vec y6 = y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
    const Vec k6 = shape.rhs(y6, mode);
    const Vec ynew = y + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);

    bool positive = (y2.array() > 0).all() && (y3.array() > 0).all() && (y4.array() > 0).all() &&
                    (y5.array() > 0).all() && (y6.array() > 0).all() && (ynew.array() > 0).all();
    if (!positive || !ynew.allFinite()) {
      ++traj.rejected;
      h *= 0.25;
      continue;
    }
    const Vec k7 = shape.rhs(ynew, mode);
    const Vec err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
    const Vec tol = (opts.atol + opts.rtol * y.cwiseAbs().cwiseMax(ynew.cwiseAbs()).array()).matrix();
    const double e = (err.array() / tol.array()).abs().maxCoeff();

    if (e <= 1.0) {
      t = (t_end - t <= h) ? t_end : t + h;
      y = ynew;
      k1 = k7;
      const double rs = shape.riem_sq(y);
      traj.samples.push_back({t, y, rs});
      if (y.minCoeff() < opts.scale_floor || rs > ceiling_sq) {
        traj.termination = OdeTermination::SingularityDetected;
        traj.t_sing = singular_estimate(y, k1);
        return traj;
      }
    } else {
      ++traj.rejected;
    }
    const double factor = e == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(e, -0.2), 0.2, 5.0);
    h *= factor;
  }
  return traj;
}

namespace {

std::pair<Eigen::Index, Eigen::Index> sphere_and_flat(const std::vector<Factor>& shape) {
  if (shape.size() != 2) throw Error(ErrorCode::ShapeMismatch, "expected exactly one sphere and one flat factor");
  if (is_sphere(shape[0]) && !is_sphere(shape[1])) return {0, 1};
  if (!is_sphere(shape[0]) && is_sphere(shape[1])) return {1, 0};
  throw Error(ErrorCode::ShapeMismatch, "expected exactly one sphere and one flat factor");
}

}  // namespace

DriftReport conserved_ratio(const OdeTrajectory& traj, double p, double t_max) {
  const auto [ia, ib] = sphere_and_flat(traj.shape);
  if (traj.samples.empty()) throw Error(ErrorCode::ShapeMismatch, "empty trajectory");
  const auto& first = traj.samples.front().scales;
  const double log0 = std::log(first(ib)) - p * std::log(first(ia));
  DriftReport r{0.0, 0.0};
  for (const auto& s : traj.samples) {
    if (s.t > t_max) break;
    const double d = std::log(s.scales(ib)) - p * std::log(s.scales(ia)) - log0;
    r.max_log_drift = std::max(r.max_log_drift, std::abs(d));
    r.max_rel_drift = std::max(r.max_rel_drift, std::abs(std::expm1(d)));
  }
  return r;
}

double fitted_conserved_exponent(const OdeTrajectory& traj) {
  const auto [ia, ib] = sphere_and_flat(traj.shape);
  const Eigen::Index m = static_cast<Eigen::Index>(traj.samples.size());
  if (m < 2) throw Error(ErrorCode::ShapeMismatch, "need at least two samples");
  Mat design(m, 2);
  Vec rhs(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    design(i, 0) = std::log(traj.samples[static_cast<std::size_t>(i)].scales(ia));
    design(i, 1) = 1.0;
    rhs(i) = std::log(traj.samples[static_cast<std::size_t>(i)].scales(ib));
  }
  return design.colPivHouseholderQr().solve(rhs)(0);
}

Vec collapse_scalar(const OdeTrajectory& traj) {
  Eigen::Index ib = -1;
  for (std::size_t j = 0; j < traj.shape.size(); ++j) {
    if (!is_sphere(traj.shape[j]) && traj.shape[j].dim == 1) {
      if (ib >= 0) throw Error(ErrorCode::ShapeMismatch, "more than one circle factor");
      ib = static_cast<Eigen::Index>(j);
    }
  }
  if (ib < 0) throw Error(ErrorCode::ShapeMismatch, "collapse scalar needs a flat circle factor");
  Vec out(static_cast<Eigen::Index>(traj.samples.size()));
  for (std::size_t i = 0; i < traj.samples.size(); ++i) {
    const auto& s = traj.samples[i];
    out(static_cast<Eigen::Index>(i)) = std::sqrt(s.riem_sq) * kPi * kPi * s.scales(ib);
  }
  return out;
}

double product_volume(const ProductState& s) {
  s.validate();
  double v = 1.0;
  for (const auto& f : s.factors) {
    const double unit = is_sphere(f) ? 2.0 * std::pow(kPi, 0.5 * (f.dim + 1)) / std::tgamma(0.5 * (f.dim + 1))
                                     : std::pow(2.0 * kPi, f.dim);
    v *= unit * std::pow(f.scale, 0.5 * f.dim);
  }
  return v;
}

double product_energy(const ProductState& s) { return product_invariants(s).riem_sq * product_volume(s); }

double product_diameter(const ProductState& s) {
  s.validate();
  double d2 = 0.0;
  for (const auto& f : s.factors) d2 += kPi * kPi * f.scale * (is_sphere(f) ? 1.0 : f.dim);
  return std::sqrt(d2);
}

}  // namespace l2flow
