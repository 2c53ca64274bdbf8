#include "l2flow/flow.hpp"

#include "l2flow/stencil.hpp"

#include <unsupported/Eigen/AutoDiff>

#include <algorithm>
#include <cmath>
#include <string>

namespace l2flow {

namespace {

constexpr int kStencilVars = stencil::kPsiWidth + stencil::kPhiWidth;
using Derivs = Eigen::Matrix<double, kStencilVars, 1>;
using AD = Eigen::AutoDiffScalar<Derivs>;

void check_shape(const TangentField& h, const WarpedMetric& m) {
  if (h.dphi.size() != m.size() || h.dpsi.size() != m.size())
    throw Error(ErrorCode::ShapeMismatch, "tangent field and metric live on different grids");
}

// Partial derivatives of the discrete energy with respect to every nodal phi
// and psi, before any pole constraints are applied.
void energy_partials(const WarpedMetric& m, Vec& d_phi, Vec& d_psi) {
  const Eigen::Index n = m.size();
  d_phi = Vec::Zero(n);
  d_psi = Vec::Zero(n);
  const double k_sigma = m.fiber().k_sigma;
  std::array<double, stencil::kPsiWidth> psi_v{};
  std::array<double, stencil::kPhiWidth> phi_v{};
  std::array<AD, stencil::kPsiWidth> psi{};
  std::array<AD, stencil::kPhiWidth> phi{};
  for (Eigen::Index i = 0; i < n; ++i) {
    if (m.is_pole(i)) continue;
    if (m.psi()(i) < m.options().psi_floor)
      throw Error(ErrorCode::DegenerateFiber, "psi = " + std::to_string(m.psi()(i)) + " at node " + std::to_string(i));
    stencil::gather(m, i, psi_v, phi_v);
    for (int k = 0; k < stencil::kPsiWidth; ++k) psi[k] = AD(psi_v[k], kStencilVars, k);
    for (int k = 0; k < stencil::kPhiWidth; ++k) phi[k] = AD(phi_v[k], kStencilVars, stencil::kPsiWidth + k);
    const AD e = stencil::node_energy_density(psi, phi, m.dx(), k_sigma);
    const double w = m.weights()(i);
    for (int o = -2; o <= 2; ++o) {
      const auto r = stencil::neighbour(m, i, o);
      d_psi(r.node) += w * r.psi_sign * e.derivatives()(o + 2);
    }
    for (int o = -1; o <= 1; ++o) {
      const auto r = stencil::neighbour(m, i, o);
      d_phi(r.node) += w * e.derivatives()(stencil::kPsiWidth + o + 1);
    }
  }
  const double scale = norm_factor(m.options().norm) * m.fiber().area;
  d_phi *= scale;
  d_psi *= scale;
}

}  // namespace

double l2_inner(const TangentField& h, const TangentField& k, const WarpedMetric& m) {
  check_shape(h, m);
  check_shape(k, m);
  const auto& w = m.weights().array();
  const auto& phi = m.phi().array();
  const auto& psi = m.psi().array();
  const double sum = (w * (4.0 * h.dphi.array() * k.dphi.array() * psi.square() / phi +
                           8.0 * h.dpsi.array() * k.dpsi.array() * phi))
                         .sum();
  return m.fiber().area * sum;
}

double volume_derivative(const WarpedMetric& m, const TangentField& h) {
  check_shape(h, m);
  const auto& psi = m.psi().array();
  return m.fiber().area *
         (m.weights().array() * (h.dphi.array() * psi.square() + 2.0 * m.phi().array() * psi * h.dpsi.array())).sum();
}

TangentField metric_tangent(const WarpedMetric& m) { return {0.5 * m.phi(), 0.5 * m.psi()}; }

TangentField grad_energy(const WarpedMetric& m) {
  const Eigen::Index n = m.size();
  Vec d_phi, d_psi;
  energy_partials(m, d_phi, d_psi);

  const double area = m.fiber().area;
  auto mass_phi = [&](Eigen::Index i) { return 4.0 * area * m.weights()(i) * std::pow(m.psi()(i), 2) / m.phi()(i); };
  auto mass_psi = [&](Eigen::Index i) { return 8.0 * area * m.weights()(i) * m.phi()(i); };

  TangentField g = TangentField::zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (m.is_pole(i)) continue;
    const double mp = mass_phi(i), mq = mass_psi(i);
    if (mp < 1e-14 || mq < 1e-14)
      throw Error(ErrorCode::SingularMass, "mass matrix entry below 1e-14 at node " + std::to_string(i));
    g.dphi(i) = d_phi(i) / mp;
    g.dpsi(i) = d_psi(i) / mq;
  }
  if (m.periodic()) return g;

  // On S^3 the free unknowns exclude phi at the poles and psi next to them:
  //   phi_p = (4 phi_a - phi_b) / 3,  psi_a = dx phi_a - dx/4 phi_b + psi_b / 8,
  // with a, b the first two nodes inward from pole p. Both maps are linear,
  // so the partials fold back by the chain rule and the mass matrix picks up
  // a rank-one term on (phi_a, phi_b, psi_b).
  const double dx = m.dx();
  const Eigen::Vector3d r(dx, -0.25 * dx, 0.125);
  for (const auto [p, a, b] : {std::array<Eigen::Index, 3>{0, 1, 2}, std::array<Eigen::Index, 3>{n - 1, n - 2, n - 3}}) {
    Eigen::Vector3d rhs(d_phi(a) + 4.0 / 3.0 * d_phi(p), d_phi(b) - 1.0 / 3.0 * d_phi(p), d_psi(b));
    rhs += d_psi(a) * r;
    Eigen::Matrix3d mass = Eigen::Vector3d(mass_phi(a), mass_phi(b), mass_psi(b)).asDiagonal();
    mass += mass_psi(a) * r * r.transpose();
    const Eigen::Vector3d sol = mass.ldlt().solve(rhs);
    g.dphi(a) = sol(0);
    g.dphi(b) = sol(1);
    g.dpsi(b) = sol(2);
    g.dpsi(a) = r.dot(sol);
    g.dphi(p) = (4.0 * sol(0) - sol(1)) / 3.0;
    g.dpsi(p) = 0.0;
  }
  return g;
}

WarpedMetric advance(const WarpedMetric& m, const TangentField& v, double dt) {
  check_shape(v, m);
  const Vec phi2 = m.phi().array().square() + 2.0 * dt * m.phi().array() * v.dphi.array();
  const Vec psi2 = m.psi().array().square() + 2.0 * dt * m.psi().array() * v.dpsi.array();
  if ((phi2.array() <= 0.0).any() || (psi2.array() < 0.0).any())
    throw Error(ErrorCode::NonPositiveDensity, "step drove a metric coefficient negative");
  return m.with_profile(phi2.cwiseSqrt(), psi2.cwiseSqrt());
}

TangentField realized_velocity(const WarpedMetric& from, const WarpedMetric& to, double dt) {
  const Eigen::Index n = from.size();
  if (to.size() != n) throw Error(ErrorCode::ShapeMismatch, "metrics live on different grids");
  TangentField e = TangentField::zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double p0 = from.phi()(i), p1 = to.phi()(i);
    e.dphi(i) = (p1 * p1 - p0 * p0) / (2.0 * p0 * dt);
    const double q0 = from.psi()(i), q1 = to.psi()(i);
    if (q0 > 0.0) e.dpsi(i) = (q1 * q1 - q0 * q0) / (2.0 * q0 * dt);
  }
  return e;
}

std::string_view to_string(Integrator i) { return i == Integrator::Rk2 ? "rk2" : "euler"; }

Integrator integrator_from_string(std::string_view s) {
  if (s == "euler") return Integrator::Euler;
  if (s == "rk2") return Integrator::Rk2;
  throw Error(ErrorCode::ValidationError, "integrator must be 'euler' or 'rk2', got '" + std::string(s) + "'");
}

std::string_view to_string(FlowTermination t) {
  switch (t) {
    case FlowTermination::ReachedEnd: return "ReachedEnd";
    case FlowTermination::SingularityDetected: return "SingularityDetected";
    case FlowTermination::StepUnderflow: return "StepUnderflow";
  }
  return "Unknown";
}

void FlowConfig::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0)) throw Error(ErrorCode::ValidationError, std::string(name) + " must be positive");
  };
  positive(dt_safety, "dt_safety");
  positive(volume_guard, "volume_guard");
  positive(t_end, "t_end");
  positive(riem_ceiling, "riem_ceiling");
  positive(psi_floor, "psi_floor");
  positive(min_dt, "min_dt");
  if (regrid_every < 0) throw Error(ErrorCode::ValidationError, "regrid_every must be >= 0");
  if (sample_every < 1) throw Error(ErrorCode::ValidationError, "sample_every must be >= 1");
}

namespace {

double max_riem(const WarpedMetric& m) { return curvature_profile(m).riem_sq.maxCoeff(); }

double dt_law(const WarpedMetric& m, double riem, const FlowConfig& cfg) {
  const double ds = m.dx() * m.phi().minCoeff();
  return cfg.dt_safety * std::pow(ds, 4) / std::max(1.0, riem);
}

TangentField flow_velocity(const WarpedMetric& m, const TangentField& g, bool normalized, double f, double vol) {
  TangentField v = g * -1.0;
  if (normalized) v = v + metric_tangent(m) * (-f / (6.0 * vol));
  return v;
}

// Homothety g -> c^2 g taking the volume to vol.
WarpedMetric rescaled_to_volume(const WarpedMetric& m, double vol) {
  return scaled(m, std::cbrt(vol / volume(m)));
}

// Everything step() needs about its starting point.
struct StepStart {
  TangentField grad;
  double f, vol;
};

StepResult guarded_step(const WarpedMetric& m, const StepStart& s, const FlowConfig& cfg, double dt) {
  const TangentField v = flow_velocity(m, s.grad, cfg.normalized, s.f, s.vol);
  const double ft = normalized_energy(s.vol, s.f);
  int halvings = 0;
  while (true) {
    if (dt < cfg.min_dt)
      throw Error(ErrorCode::StepUnderflow, "dt fell below " + std::to_string(cfg.min_dt) + " without passing the guards");
    try {
      WarpedMetric next = advance(m, v, dt);
      if (cfg.integrator == Integrator::Rk2) {
        const double f1 = energy(next), vol1 = volume(next);
        const TangentField v1 = flow_velocity(next, grad_energy(next), cfg.normalized, f1, vol1);
        next = advance(m, (v + v1) * 0.5, dt);
      }
      // the explicit step drifts the volume at O(dt^2); F~ is scale invariant, so
      // projecting back by a homothety leaves the normalized flow unchanged
      if (cfg.normalized) next = rescaled_to_volume(next, s.vol);
      const double fn = energy(next);
      bool ok = true;
      if (cfg.normalized) {
        const double vn = volume(next);
        if (cfg.energy_guard && normalized_energy(vn, fn) > ft) ok = false;
        if (std::abs(vn / s.vol - 1.0) > cfg.volume_guard) ok = false;
      } else if (cfg.energy_guard && fn > s.f) {
        ok = false;
      }
      if (ok) {
        TangentField e = realized_velocity(m, next, dt);
        return {std::move(next), std::move(e), dt, halvings};
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NonPositiveDensity && e.code() != ErrorCode::BoundaryViolation) throw;
    }
    dt *= 0.5;
    ++halvings;
  }
}

}  // namespace

double stable_dt(const WarpedMetric& m, const FlowConfig& cfg) { return dt_law(m, max_riem(m), cfg); }

StepResult step(const WarpedMetric& m, const FlowConfig& cfg, double dt_start) {
  cfg.validate();
  const StepStart s{grad_energy(m), energy(m), volume(m)};
  return guarded_step(m, s, cfg, dt_start > 0.0 ? dt_start : stable_dt(m, cfg));
}

FlowTrajectory run(const WarpedMetric& m0, const FlowConfig& cfg) {
  cfg.validate();
  FlowTrajectory traj;
  traj.config = cfg;

  WarpedMetric m = m0;
  double t = 0.0;
  bool regridded = false;
  std::size_t since_regrid = 0;
  const double t_tol = 1e-12 * cfg.t_end;

  auto stop = [&](FlowTermination why, std::string reason) {
    traj.termination = why;
    traj.reason = std::move(reason);
  };

  while (true) {
    // state at time t: evaluate everything once
    StepStart s;
    double riem;
    try {
      riem = max_riem(m);
      s = {grad_energy(m), energy(m), volume(m)};
    } catch (const Error& e) {
      if (e.code() != ErrorCode::DegenerateFiber && e.code() != ErrorCode::SingularMass) throw;
      stop(FlowTermination::SingularityDetected, e.what());
      break;
    }
    const bool is_sample = traj.steps % static_cast<std::size_t>(cfg.sample_every) == 0;
    const bool at_end = t >= cfg.t_end - t_tol;
    const double psi_min = m.periodic() ? m.psi().minCoeff() : m.psi().segment(1, m.size() - 2).minCoeff();

    std::string singular;
    if (riem > cfg.riem_ceiling) singular = "max |Rm|^2 = " + std::to_string(riem) + " exceeds the ceiling";
    else if (psi_min < cfg.psi_floor) singular = "min psi = " + std::to_string(psi_min) + " below the floor";

    const bool terminal = at_end || !singular.empty() || traj.steps >= cfg.max_steps;
    if (is_sample || terminal) {
      const TangentField v = flow_velocity(m, s.grad, cfg.normalized, s.f, s.vol);
      traj.samples.push_back({t, traj.samples.empty() ? 0.0 : t - traj.samples.back().t, m, v, s.vol, s.f,
                              l2_inner(s.grad, s.grad, m), riem, regridded});
      regridded = false;
    }
    if (!singular.empty()) {
      stop(FlowTermination::SingularityDetected, singular);
      break;
    }
    if (at_end) break;
    if (traj.steps >= cfg.max_steps) {
      stop(FlowTermination::StepUnderflow, "step budget exhausted");
      break;
    }

    const double dt = std::min(dt_law(m, riem, cfg), cfg.t_end - t);
    StepResult r = [&]() -> StepResult {
      try {
        return guarded_step(m, s, cfg, dt);
      } catch (const Error& e) {
        if (e.code() == ErrorCode::StepUnderflow) {
          stop(FlowTermination::StepUnderflow, e.what());
          return {m, TangentField::zero(m.size()), 0.0, -1};
        }
        if (e.code() == ErrorCode::DegenerateFiber) {
          stop(FlowTermination::SingularityDetected, e.what());
          return {m, TangentField::zero(m.size()), 0.0, -1};
        }
        throw;
      }
    }();
    if (r.halvings < 0) break;

    // the stored velocity at a sample is the realized step leaving it
    if (is_sample && !traj.samples.empty() && traj.samples.back().t == t) traj.samples.back().velocity = r.velocity;

    traj.halvings += static_cast<std::size_t>(r.halvings);
    ++traj.steps;
    t = (cfg.t_end - (t + r.dt) <= t_tol) ? cfg.t_end : t + r.dt;
    m = std::move(r.metric);

    if (cfg.regrid_every > 0 && ++since_regrid >= static_cast<std::size_t>(cfg.regrid_every)) {
      const double vol = volume(m);
      m = resample_arclength(m, m.size());
      if (cfg.normalized) m = rescaled_to_volume(m, vol);
      since_regrid = 0;
      regridded = true;
    }
  }
  return traj;
}

double ResidualReport::median_volume_rate() const {
  std::vector<double> v;
  for (Eigen::Index i = 0; i < volume_rate.size(); ++i)
    if (std::isfinite(volume_rate(i))) v.push_back(volume_rate(i));
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2), v.end());
  return v[v.size() / 2];
}

double ResidualReport::median_dissipation() const {
  std::vector<double> v;
  for (Eigen::Index i = 0; i < dissipation.size(); ++i)
    if (std::isfinite(dissipation(i))) v.push_back(dissipation(i));
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2), v.end());
  return v[v.size() / 2];
}

ResidualReport monitor_residuals(const FlowTrajectory& traj) {
  const auto& s = traj.samples;
  if (s.size() < 3) throw Error(ErrorCode::ShapeMismatch, "residuals need at least three samples");
  const Eigen::Index k = static_cast<Eigen::Index>(s.size()) - 1;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  ResidualReport r{Vec::Constant(k, nan), Vec::Constant(k, nan)};
  const bool normalized = traj.config.normalized;

  for (Eigen::Index i = 0; i < k; ++i) {
    const auto& a = s[static_cast<std::size_t>(i)];
    const auto& b = s[static_cast<std::size_t>(i + 1)];
    if (normalized && normalized_energy(b.volume, b.energy) > normalized_energy(a.volume, a.energy) * (1.0 + 1e-10))
      ++r.ftilde_violations;
    if (b.regridded) continue;
    const double dt = b.t - a.t;
    if (!(dt > 0.0)) continue;
    // (4 - n)/4 F on the plain flow; the normalization term cancels it exactly
    const double expected = normalized ? 0.0 : 0.25 * a.energy;
    r.volume_rate(i) = std::abs((b.volume - a.volume) / dt - expected) / std::max(a.energy, 1e-300);
    if (!normalized && a.grad_sq > 0.0)
      r.dissipation(i) = std::abs((b.energy - a.energy) / dt + a.grad_sq) / a.grad_sq;
  }
  if (normalized) {
    double drift = 0.0;
    for (const auto& x : s) drift = std::max(drift, std::abs(x.volume / s.front().volume - 1.0));
    const double span = s.back().t - s.front().t;
    r.volume_drift_per_time = span > 0.0 ? drift / span : 0.0;
  }
  return r;
}

}  // namespace l2flow
