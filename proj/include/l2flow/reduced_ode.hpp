#pragma once

#include "l2flow/core.hpp"

#include <limits>
#include <string_view>
#include <vector>

namespace l2flow {

enum class FactorCurvature { Sphere, Flat };

/// One factor of a product metric: scale * (unit round sphere or flat metric).
struct Factor {
  int dim = 1;
  FactorCurvature curv = FactorCurvature::Flat;
  double scale = 1.0;
};

struct ProductState {
  std::vector<Factor> factors;
  double t = 0.0;

  int dimension() const;
  /// Throws ValidationError on dim < 1, a 1-sphere, a nonpositive scale or n < 2.
  void validate() const;
};

/// Two ways of writing the homogeneous flow. GradientDerived evaluates
/// -(-2 Rcheck + |Rm|^2 g / 2) block by block; PaperLiteral uses the
/// closed-form coefficients quoted for round spheres and S^5 x S^1, which are exactly
/// half as large.
enum class RhsMode { PaperLiteral, GradientDerived };

std::string_view to_string(RhsMode mode);
RhsMode rhs_mode_from_string(std::string_view s);

struct ProductInvariants {
  double riem_sq = 0.0;  // full tensor norm sum R_ijkl^2
  Vec check_r;           // per factor: Rcheck = check_r(j) * (unit metric of factor j)
  int dimension = 0;
};

/// Brute-force contraction of the curvature tensor in an orthonormal frame.
ProductInvariants product_invariants(const ProductState& s);

/// c_m = |Rm|^2 of the unit round m-sphere, by the same contraction.
double sphere_riem_constant(int m);

/// dA_j/dt for every factor. PaperLiteral throws UnsupportedState unless the
/// state is a single round sphere or S^5 x S^1.
Vec product_rhs(const ProductState& s, RhsMode mode);

/// GradientDerived / PaperLiteral, checked to be one constant across factors.
double mode_ratio(const ProductState& s);

/// beta in dA/dt = beta / A for the round n-sphere.
double sphere_rate(int n, RhsMode mode);

/// A(t) = sqrt(A0^2 + 2 beta t). Throws PastSingularTime at or beyond the lifespan.
double analytic_sphere(int n, double A0, double t, RhsMode mode);

/// Time at which A reaches zero; +inf for n <= 4.
double sphere_lifespan(int n, double A0, RhsMode mode);

struct OdeOptions {
  double rtol = 1e-10;
  double atol = 1e-14;
  double scale_floor = 1e-8;
  double riem_ceiling = 1e12;  // ceiling on |Rm|, not |Rm|^2
  double h0 = 0.0;             // 0 picks an initial step from the rhs
  std::size_t max_steps = 1000000;
};

enum class OdeTermination { ReachedEnd, SingularityDetected };

std::string_view to_string(OdeTermination t);

struct OdeSample {
  double t;
  Vec scales;
  double riem_sq;
};

struct OdeTrajectory {
  std::vector<Factor> shape;  // dims and curvatures; scales of the initial state
  RhsMode mode = RhsMode::GradientDerived;
  std::vector<OdeSample> samples;
  OdeTermination termination = OdeTermination::ReachedEnd;
  double t_sing = std::numeric_limits<double>::quiet_NaN();
  std::size_t rejected = 0;

  ProductState state(std::size_t i) const;
};

/// Dormand-Prince 5(4) with step rejection. Stops with SingularityDetected
/// when a scale drops below the floor, |Rm| exceeds the ceiling, or the step
/// size underflows while a factor is collapsing; t_sing then extrapolates the
/// collapsing A^2 linearly to zero. StepSizeUnderflow otherwise.
OdeTrajectory integrate(const ProductState& s0, RhsMode mode, double t_end, const OdeOptions& opts = {});

struct DriftReport {
  double max_rel_drift;  // max |r(t)/r(0) - 1|, r = B / A^p
  double max_log_drift;  // max |ln r(t) - ln r(0)|
};

/// Drift of B / A^p for a sphere factor A and a flat factor B, over samples
/// with t <= t_max. ShapeMismatch unless there are exactly those two factors.
DriftReport conserved_ratio(const OdeTrajectory& traj, double p,
                            double t_max = std::numeric_limits<double>::infinity());

/// Least-squares slope of ln B against ln A: the exponent that best conserves B / A^p.
double fitted_conserved_exponent(const OdeTrajectory& traj);

/// |Rm| inj^2 with inj^2 bounded by pi^2 B for the flat circle factor.
Vec collapse_scalar(const OdeTrajectory& traj);

/// Riemannian volume; flat factors are unit tori (2 pi)^d before scaling.
double product_volume(const ProductState& s);

/// F = |Rm|^2 Vol (curvature is constant). Full tensor norm.
double product_energy(const ProductState& s);

/// Exact diameter sqrt(sum_j diam_j^2), diam = pi sqrt(A) per sphere and
/// pi sqrt(d A) per flat torus factor.
double product_diameter(const ProductState& s);

}  // namespace l2flow
