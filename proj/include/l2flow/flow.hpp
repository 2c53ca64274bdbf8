#pragma once

#include "l2flow/geometry.hpp"

#include <limits>
#include <string_view>
#include <vector>

namespace l2flow {

/// Variation (dphi, dpsi) of the profile, i.e. the symmetric 2-tensor
/// h = 2 phi dphi dx^2 + 2 psi dpsi g_Sigma.
struct TangentField {
  Vec dphi;
  Vec dpsi;

  static TangentField zero(Eigen::Index n) { return {Vec::Zero(n), Vec::Zero(n)}; }
  TangentField operator+(const TangentField& o) const { return {dphi + o.dphi, dpsi + o.dpsi}; }
  TangentField operator-(const TangentField& o) const { return {dphi - o.dphi, dpsi - o.dpsi}; }
  TangentField operator*(double a) const { return {a * dphi, a * dpsi}; }
};

/// int [4 dphi_h dphi_k / phi^2 + 8 dpsi_h dpsi_k / psi^2] dV, dV = phi psi^2 dx dA_Sigma.
double l2_inner(const TangentField& h, const TangentField& k, const WarpedMetric& m);

/// Riesz representative of dF with respect to l2_inner. Partials of the
/// discrete energy come from forward-mode autodiff of the node kernel; the
/// mass matrix of l2_inner is diagonal. On S^3 the tangent is admissible:
/// dpsi = 0 at the poles and dphi at the poles follows the slaved reflection.
/// Throws SingularMass when a mass entry drops below 1e-14.
TangentField grad_energy(const WarpedMetric& m);

/// Volume rate dVol[h].
double volume_derivative(const WarpedMetric& m, const TangentField& h);

/// The tangent of g itself, (phi / 2, psi / 2).
TangentField metric_tangent(const WarpedMetric& m);

/// Profile moved along a tangent in metric space: phi^2 + t 2 phi dphi, and
/// likewise for psi. Throws NonPositiveDensity if a square goes negative.
WarpedMetric advance(const WarpedMetric& m, const TangentField& v, double dt);

/// (g_next - g) / dt expressed as a tangent at g.
TangentField realized_velocity(const WarpedMetric& from, const WarpedMetric& to, double dt);

enum class Integrator { Euler, Rk2 };

std::string_view to_string(Integrator i);
Integrator integrator_from_string(std::string_view s);

struct FlowConfig {
  bool normalized = false;
  Integrator integrator = Integrator::Euler;
  double dt_safety = 0.1;
  bool energy_guard = true;
  double volume_guard = 1e-8;  // per-step relative volume change allowed on normalized runs
  int regrid_every = 50;       // 0 disables regridding
  int sample_every = 10;       // keep every k-th accepted step (plus the first and last)
  double t_end = 1.0;
  double riem_ceiling = 1e6;   // on max |Rm|^2
  double psi_floor = 1e-6;     // interior psi below this stops the run
  std::size_t max_steps = 50000000;
  double min_dt = 1e-16;

  void validate() const;
};

/// dt_safety (min ds)^4 / max(1, max |Rm|^2).
double stable_dt(const WarpedMetric& m, const FlowConfig& cfg);

struct StepResult {
  WarpedMetric metric;
  TangentField velocity;  // realized (g_next - g) / dt
  double dt;
  int halvings;
};

/// One guarded explicit step. Velocity is -grad F, plus -F/(6 Vol) g when
/// normalized. dt starts from stable_dt (or dt_start if positive) and is
/// halved until F decreases (unnormalized) or F~ decreases and the volume
/// changes by at most cfg.volume_guard (normalized). Normalized steps are
/// rescaled back to the starting volume. StepUnderflow below min_dt.
StepResult step(const WarpedMetric& m, const FlowConfig& cfg, double dt_start = 0.0);

enum class FlowTermination { ReachedEnd, SingularityDetected, StepUnderflow };

std::string_view to_string(FlowTermination t);

struct FlowSample {
  double t;
  double dt;  // step that produced this sample; 0 for the first
  WarpedMetric metric;
  TangentField velocity;  // E = dg/dt of the step leaving this sample (zero at the end)
  double volume;
  double energy;
  double grad_sq;    // l2_inner(G, G)
  double max_riem;   // max |Rm|^2
  bool regridded;    // a regrid happened between the previous sample and this one
};

struct FlowTrajectory {
  FlowConfig config;
  std::vector<FlowSample> samples;
  FlowTermination termination = FlowTermination::ReachedEnd;
  std::string reason;
  std::size_t steps = 0;
  std::size_t halvings = 0;
};

/// Runs the flow to cfg.t_end, regridding to uniform arclength every
/// cfg.regrid_every steps. Stops with SingularityDetected when max |Rm|^2
/// exceeds the ceiling, interior psi falls below the floor, or the metric
/// degenerates; StepUnderflow when the guards cannot be met.
FlowTrajectory run(const WarpedMetric& m0, const FlowConfig& cfg);

struct ResidualReport {
  Vec volume_rate;   // |dVol/dt - F/4| / max(F, eps), per interval; NaN across regrids
  Vec dissipation;   // |dF/dt + <G,G>| / <G,G>, unnormalized runs only
  std::size_t ftilde_violations = 0;  // normalized runs: F~ increases beyond 1e-10 relative
  double volume_drift_per_time = 0.0; // normalized runs: |Vol_end / Vol_0 - 1| / T

  double median_volume_rate() const;
  double median_dissipation() const;
};

/// Consistency of the sampled trajectory with dVol/dt = (4 - n)/4 F, dF/dt = -|grad F|^2
/// and monotonicity of F~ = Vol^{1/3} F. Needs at least three samples.
ResidualReport monitor_residuals(const FlowTrajectory& traj);

/// F~ = Vol^{(4-n)/n} F with n = 3.
inline double normalized_energy(double vol, double f) { return std::cbrt(vol) * f; }

}  // namespace l2flow
