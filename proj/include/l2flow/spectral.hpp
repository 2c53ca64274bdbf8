#pragma once

#include "l2flow/flow.hpp"

#include <vector>

namespace l2flow {

/// A function f(x) Y_k on the warped product, Y_k a fiber eigenfunction with
/// eigenvalue mu_0 = 0 (k = 0) or mu_1 = fiber.mu1 (k = 1), normalized so
/// that int Y_k^2 dA = area. For k = 1 on S^3 the pole values are zero.
struct ScalarProfile {
  Vec values;
  int fiber_mode = 0;
};

/// The finite-volume discretization all spectral operators share.
///
/// Cells are centred on nodes; cell measures integrate phi psi^2 with
/// Simpson's rule on linearly interpolated psi (exact for psi linear, which
/// makes the pole cells of S^3 exact to leading order). Face coefficients are
/// psi_f^2 / (phi_f dx) with face averages. Then
///   int f g dV       = area sum_i V_i f_i g_i
///   int <df, dg> dV  = area f^T K g,
/// and Laplacian f = -V^{-1} K f.
struct SpectralGrid {
  Vec cell;        // V_i
  Vec face;        // a_f, face f joins nodes f and f + 1 (mod n on circles)
  Vec fiber_diag;  // mu_k V_i / psi_i^2, zero at the poles
  std::vector<bool> active;  // k = 1 on S^3 drops the pole nodes
  int fiber_mode = 0;
  double area = 0.0;
};

SpectralGrid spectral_grid(const WarpedMetric& m, int fiber_mode);

/// First-order change of (cell, face, fiber_diag) along a metric velocity
/// (d/dt phi, d/dt psi). Active set and area are copied.
SpectralGrid spectral_variation(const WarpedMetric& m, const TangentField& v, int fiber_mode);

double fiber_eigenvalue(const WarpedMetric& m, int fiber_mode);

/// f_s^2 + mu psi^-2 f^2 integrated, i.e. area f^T K f.
double gradient_norm_sq(const ScalarProfile& f, const WarpedMetric& m);
double l2_norm_sq(const ScalarProfile& f, const WarpedMetric& m);
/// int f dV (zero by construction for k = 1).
double integral(const ScalarProfile& f, const WarpedMetric& m);

/// f_ss + 2 (psi_s / psi) f_s - mu_k psi^-2 f in conservative form. Neumann
/// type at the S^3 poles for k = 0, f = 0 there for k = 1.
ScalarProfile laplace_apply(const ScalarProfile& f, const WarpedMetric& m);

/// Rayleigh quotient int |grad f|^2 / int f^2. Throws ZeroFunction.
double dirichlet_energy(const ScalarProfile& f, const WarpedMetric& m);

struct EigenOptions {
  std::vector<int> fiber_modes{0, 1};
  int max_iterations = 5000;
  double tol = 1e-8;  // on ||Lap f + lambda f|| / ||f||
};

struct EigenReport {
  double lambda1;
  int branch;
  ScalarProfile eigenprofile;  // unit L^2 norm
  int iterations;
  double residual;
};

/// Smallest nonzero eigenvalue of -Laplacian over the requested fiber modes.
/// Shifted inverse iteration with a sparse LDL^T factorization; the k = 0
/// branch projects out constants in the dV inner product. Ties go to k = 0.
/// Throws ConvergenceFailure.
EigenReport lambda1(const WarpedMetric& m, const EigenOptions& opts = {});
EigenReport lambda1_branch(const WarpedMetric& m, int fiber_mode, const EigenOptions& opts = {});

/// Largest dtau for which the explicit biharmonic step is stable on m, with
/// a safety factor applied.
double biharmonic_dtau(const WarpedMetric& m, int fiber_mode, double safety = 0.5);

/// One explicit step of df/dtau = -Lap^2 f + 1/2 f tr E backwards in flow
/// time: m is the metric at time t and E = dg/dt there, the result lives on
/// m moved to t - dtau, i.e. (phi, psi) - dtau (dphi, dpsi). The step advances the density f dV, so int f dV is
/// preserved to round-off. Throws StepUnderflow for a nonpositive dtau.
ScalarProfile biharmonic_backstep(const ScalarProfile& f, const WarpedMetric& m, const TangentField& E, double dtau);

/// One check of the evolution identities for ||f||^2 and ||grad f||^2: the
/// change over a window of steps divided by its width, against the
/// right-hand sides at the start of each step averaged over the window.
struct IdentityCheck {
  double tau;  // start of the window
  double l2_fd, l2_rhs;
  double h1_fd, h1_rhs;
  double h1_rhs_flipped;  // with the opposite sign on int <E, df (x) df>
};

struct BackwardOptions {
  double dtau_safety = 0.5;
  int identity_samples = 10;
  int identity_window = 50;  // steps per check
  std::size_t max_steps = 50000000;
};

struct EigenDecayReport {
  double lambda_T;
  double lambda_0_bound;  // Rayleigh quotient of the back-flowed test function
  double lambda_0_true;
  double mass_drift;      // |int f_0 dV_0 - int f_T dV_T| / int |f_T| dV_T
  double sobolev_A;
  double epsilon;         // F(g_0)
  double slack;           // lambda_0_bound - 2 lambda_T
  std::size_t steps = 0;
  std::vector<IdentityCheck> identities;
  ScalarProfile f0;
};

/// Flows f_T from the last sample of traj back to the first along the time
/// reversed trajectory. Between samples phi and psi are linear in time, so E
/// is the secant; across a regrid the stored velocity of the left sample is used
/// and f is carried to the older grid by interpolation in arclength
/// fraction, with the k = 0 mean restored. Throws MissingVelocity,
/// ShapeMismatch and step errors.
EigenDecayReport run_backward(const FlowTrajectory& traj, const ScalarProfile& f_T, double sobolev_A,
                              const BackwardOptions& opts = {});

}  // namespace l2flow
