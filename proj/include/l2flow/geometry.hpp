#pragma once

#include "l2flow/core.hpp"

#include <string_view>

namespace l2flow {

enum class Topology {
  CircleProduct,  // M = Sigma x S^1, periodic in x
  SphereSO3,      // M = S^3, x in [-1, 1] with pole conditions at both ends
};

std::string_view to_string(Topology topology);
Topology topology_from_string(std::string_view s);

enum class Quadrature { Trapezoid, Simpson };

std::string_view to_string(Quadrature q);
Quadrature quadrature_from_string(std::string_view s);

/// Constant-curvature fiber surface (Sigma, g_Sigma).
struct FiberSpec {
  int k_sigma = 1;               // sectional curvature of g_Sigma, +1 or -1
  double area = 4.0 * kPi;       // Vol(g_Sigma)
  double mu1 = 2.0;              // first nonzero Laplace eigenvalue of g_Sigma
  double inj_scale = kPi;        // injectivity radius of g_Sigma

  static FiberSpec round_sphere() { return {}; }
  /// Hyperbolic surface of the given genus; area from Gauss-Bonnet. mu1 and
  /// the injectivity radius depend on the conformal class, so they are inputs.
  static FiberSpec hyperbolic(int genus, double mu1 = 0.25, double inj_scale = 1.0);

  void validate() const;
};

struct GeometryOptions {
  CurvatureNorm norm = CurvatureNorm::Paper;
  Quadrature quadrature = Quadrature::Trapezoid;
  double psi_floor = 1e-10;      // interior fiber radius below this is DegenerateFiber
  double pole_slope_tol = 1e-2;  // |psi_s -/+ 1| allowed at the poles of S^3
};

/// g = phi(x)^2 dx^2 + psi(x)^2 g_Sigma sampled on a uniform coordinate grid.
///
/// CircleProduct grids hold N nodes of one period (node N would coincide with
/// node 0). SphereSO3 grids include both poles x = -1 and x = +1, where psi
/// vanishes; phi at the poles is slaved to the even reflection of its
/// neighbours, phi_pole = (4 phi_1 - phi_2) / 3, so pole nodes carry no
/// independent lateral degree of freedom. psi at the node next to each pole
/// is slaved as well (see pole_neighbour_psi) so that the discrete psi_s is
/// exactly -/+1 at the poles; from_profile rejects samples whose slope
/// defect exceeds pole_slope_tol and projects the rest.
class WarpedMetric {
 public:
  Topology topology() const { return topology_; }
  const FiberSpec& fiber() const { return fiber_; }
  const GeometryOptions& options() const { return options_; }

  const Vec& x() const { return x_; }
  const Vec& phi() const { return phi_; }
  const Vec& psi() const { return psi_; }
  /// Quadrature weights in x; integrals are sum_i w_i * f(x_i).
  const Vec& weights() const { return weights_; }

  Eigen::Index size() const { return x_.size(); }
  double dx() const { return dx_; }
  /// Coordinate span: the period for CircleProduct, 2 for SphereSO3.
  double span() const { return span_; }
  bool periodic() const { return topology_ == Topology::CircleProduct; }
  bool is_pole(Eigen::Index i) const {
    return topology_ == Topology::SphereSO3 && (i == 0 || i == size() - 1);
  }

  /// Same topology, fiber, grid and options with new samples (validated).
  WarpedMetric with_profile(Vec phi, Vec psi) const;
  WarpedMetric with_options(const GeometryOptions& options) const;

  friend WarpedMetric from_profile(Topology, const FiberSpec&, Vec, Vec, Vec, const GeometryOptions&);

 private:
  WarpedMetric() = default;

  Topology topology_ = Topology::CircleProduct;
  FiberSpec fiber_;
  GeometryOptions options_;
  Vec x_, phi_, psi_, weights_;
  double dx_ = 0.0;
  double span_ = 0.0;
};

/// Validates samples and builds a metric. Throws GridError, NonPositiveDensity
/// or BoundaryViolation.
WarpedMetric from_profile(Topology topology, const FiberSpec& fiber, Vec x, Vec phi, Vec psi,
                          const GeometryOptions& options = {});

/// Uniform coordinate grid: [x0, x0 + period) for circles, [-1, 1] for spheres.
Vec uniform_grid(Topology topology, Eigen::Index n, double period = 1.0, double x0 = 0.0);

struct Arclength {
  Vec s;     // cumulative lateral distance from the first node
  double L;  // total lateral length
};

Arclength arclength(const WarpedMetric& m);

/// Per-node curvature; pole values of S^3 are smoothness limits.
struct CurvatureProfile {
  Vec k1;         // mixed sectional curvature -psi_ss / psi
  Vec k2;         // fiber sectional curvature (K_Sigma - psi_s^2) / psi^2
  Vec riem_sq;    // |Rm|^2 in the metric's curvature_norm convention
  Vec ricci_min;  // min(2 k1, k1 + k2)
  Vec scalar;     // 2 (2 k1 + k2)
};

CurvatureProfile curvature_profile(const WarpedMetric& m);

/// First and second arclength derivatives of psi at every node.
struct PsiDerivatives {
  Vec psi_s;
  Vec psi_ss;
};
PsiDerivatives psi_derivatives(const WarpedMetric& m);

double volume(const WarpedMetric& m);

/// F(g) = int |Rm|^2 dV via the reduced integrand 4 psi_ss^2 + 2 (K - psi_s^2)^2 / psi^2.
double energy(const WarpedMetric& m);

/// F integrated from curvature_profile(m).riem_sq; agrees with energy(m) to round-off.
double energy_from_profile(const WarpedMetric& m);

/// Re-grids to uniform arclength spacing with `n` nodes; psi by cubic interpolation in s.
WarpedMetric resample_arclength(const WarpedMetric& m, Eigen::Index n);

struct NoncollapseQuantities {
  double L;
  double min_psi;
  double inj_proxy;
};

/// Heuristic injectivity surrogate inj_proxy = min(L/2, inj_scale * min_psi).
/// For S^3, min_psi is taken over interior local minima of psi (necks); when
/// there is no neck it falls back to max psi.
NoncollapseQuantities noncollapse_quantities(const WarpedMetric& m);

/// Metric lambda^2 g, i.e. phi -> lambda phi and psi -> lambda psi.
WarpedMetric scaled(const WarpedMetric& m, double lambda);

/// Largest deviation of psi_s at the poles of S^3 from its required value; 0 for circles.
double pole_slope_defect(const WarpedMetric& m);

/// psi_1 that makes the fourth-order pole slope exactly 1, given phi_1,
/// phi_2 and psi_2 (mirror the indices for the far pole). Linear, so the
/// constraint survives scaling and tangent moves.
double pole_neighbour_psi(double phi1, double phi2, double psi2, double dx);

}  // namespace l2flow
